// Scratch probe for protocol budgets (not part of the deliverable).

use std::sync::Arc;
use std::time::Instant;

use cortexflow::cortex::SimParams;
use cortexflow::geometry::{ChannelGeometry, RatchetSpec};
use cortexflow::protocols::{
    mean_speed, mean_velocity, post_entry_window, relax_free, run_channel, speed_series,
    EntryProtocolConfig, RunOptions,
};
use cortexflow::vec2::Vec2;

const UM: f64 = 47.6;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "free".into());
    match which.as_str() {
        "free" => free_migration(),
        "com" => com_conservation(),
        "relax" => relax_equilibrium(),
        "shape" => shape_vs_h(),
        "flat" => flat_arrest(),
        "ratchet" => ratchet_migration(),
        other => eprintln!("unknown probe {other}"),
    }
}

fn free_migration() {
    let t0 = Instant::now();
    let params = SimParams::<f64> {
        polymerization_speed: 2.0,
        compensation: false,
        ..SimParams::default()
    };
    let opts = RunOptions {
        frame_stride: 2000,
        ..RunOptions::default()
    };
    let traj = relax_free(&params, 200, 10.0, &opts).unwrap();
    let v = params.polymerization_speed;
    let u = mean_velocity(&traj, (5.0, 10.0)).unwrap();
    let angle = (u.normalized().unwrap().dot(params.polarization)).acos().to_degrees();
    println!(
        "free migration: |u| = {:.4} ({}v), angle to omega = {:.3} deg, elapsed {:.1}s, frames {}",
        u.norm(),
        u.norm() / v,
        angle,
        t0.elapsed().as_secs_f64(),
        traj.frames.len()
    );
}

fn com_conservation() {
    for h in [0.01, 0.04, 0.1] {
        let t0 = Instant::now();
        let params = SimParams::<f64> {
            polymerization_speed: 2.0,
            compensation: true,
            ..SimParams::default()
        }
        .with_spread_fraction(h);
        let opts = RunOptions {
            frame_stride: 5000,
            ..RunOptions::default()
        };
        let traj = relax_free(&params, 200, 10.0, &opts).unwrap();
        let drift = (traj.coms.last().unwrap().clone() - traj.coms[0]).norm();
        println!(
            "h = {h}: COM drift over T=10: {:.3e} (budget {:.3e}), elapsed {:.1}s",
            drift,
            1e-3 * 2.0 * 10.0,
            t0.elapsed().as_secs_f64()
        );
    }
}

fn relax_equilibrium() {
    let t0 = Instant::now();
    let params = SimParams::<f64> {
        polymerization_speed: 0.0,
        ..SimParams::default()
    };
    let opts = RunOptions {
        frame_stride: 1000,
        ..RunOptions::default()
    };
    let traj = relax_free(&params, 200, 30.0, &opts).unwrap();
    let last = traj.frames.last().unwrap();
    let com = last.center_of_mass();
    let r_star = params.equilibrium_radius();
    let mut worst = 0.0f64;
    for p in last.positions() {
        worst = worst.max(((*p - com).norm() - r_star).abs() / r_star);
    }
    println!(
        "relax: worst radius error {:.2e}, iso {:.6}, t_end {:.2}, elapsed {:.1}s",
        worst,
        traj.energies.last().unwrap().isoperimetric_ratio,
        traj.end_time(),
        t0.elapsed().as_secs_f64()
    );
}

fn shape_vs_h() {
    for h in [0.01, 0.04, 0.1] {
        let params = SimParams::<f64> {
            polymerization_speed: 2.0,
            compensation: true,
            ..SimParams::default()
        }
        .with_spread_fraction(h);
        let opts = RunOptions {
            frame_stride: 5000,
            ..RunOptions::default()
        };
        let traj = relax_free(&params, 200, 15.0, &opts).unwrap();
        let last = traj.frames.last().unwrap();
        let com = last.center_of_mass();
        let r_star = params.equilibrium_radius();
        let mut dev = 0.0f64;
        for p in last.positions() {
            dev = dev.max(((*p - com).norm() - r_star).abs() / r_star);
        }
        let u = mean_velocity(&traj, (10.0, 15.0)).unwrap();
        println!("h = {h}: max radial deviation {dev:.4}, steady |u| = {:.2e}", u.norm());
    }
}

fn flat_arrest() {
    for (width_um, h) in [(2.16, 0.04), (2.16, 0.8), (3.7, 0.04), (3.7, 0.8)] {
        let t0 = Instant::now();
        let params = SimParams::<f64> {
            polymerization_speed: 2.0,
            polarization: Vec2::new(1.0, 0.0),
            ..SimParams::default()
        }
        .with_spread_fraction(h);
        let geom = Arc::new(
            ChannelGeometry::flat_with_entrance(width_um / 2.0 / UM, 0.0).unwrap(),
        );
        let entry = EntryProtocolConfig::default();
        let opts = RunOptions {
            frame_stride: 5000,
            ..RunOptions::default()
        };
        match run_channel(&params, 200, geom, &entry, 40.0, &opts) {
            Ok(traj) => {
                let w = post_entry_window(&traj, 0.4).unwrap();
                let u = mean_speed(&traj, w).unwrap();
                println!(
                    "flat {width_um} um, h = {h}: entered at {:.1}, post-entry u = {:.4} ({:.3}v), elapsed {:.0}s",
                    traj.entered_at.unwrap(),
                    u,
                    u / 2.0,
                    t0.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("flat {width_um} um, h = {h}: {e} ({:.0}s)", t0.elapsed().as_secs_f64()),
        }
    }
}

fn ratchet_migration() {
    let t0 = Instant::now();
    let params = SimParams::<f64> {
        polymerization_speed: 2.0,
        polarization: Vec2::new(1.0, 0.0),
        ..SimParams::default()
    }
    .with_spread_fraction(0.1);
    let spec = RatchetSpec::new(
        vec![
            cortexflow::geometry::Section { wavelength: 3.9 / UM, length: 6.0 * 3.9 / UM },
            cortexflow::geometry::Section { wavelength: 7.6 / UM, length: 4.0 * 7.6 / UM },
            cortexflow::geometry::Section { wavelength: 11.7 / UM, length: 3.0 * 11.7 / UM },
        ],
        1.4 / UM,
        2.7 / UM,
        0.4,
    )
    .unwrap();
    let geom = Arc::new(ChannelGeometry::ratchet_with_entrance(spec, 0.0).unwrap());
    let entry = EntryProtocolConfig::default();
    let opts = RunOptions {
        frame_stride: 2000,
        ..RunOptions::default()
    };
    match run_channel(&params, 200, geom, &entry, 40.0, &opts) {
        Ok(traj) => {
            let w = post_entry_window(&traj, 0.4).unwrap();
            let u = mean_speed(&traj, w).unwrap();
            let com_end = traj.coms.last().unwrap();
            println!(
                "ratchet: entered {:.1}, post u = {:.4}, com_x(end) = {:.3}, elapsed {:.0}s, frames {}",
                traj.entered_at.unwrap(),
                u,
                com_end.x,
                t0.elapsed().as_secs_f64(),
                traj.frames.len()
            );
            let series = speed_series(&traj);
            let tail: Vec<_> = series.iter().rev().take(20).collect();
            println!("tail vx: {:?}", tail.iter().map(|(_, v)| (*v * 1000.0).round() / 1000.0).collect::<Vec<_>>());
        }
        Err(e) => println!("ratchet: {e} ({:.0}s)", t0.elapsed().as_secs_f64()),
    }
}
