//! Scratch measurement harness. Not part of the suite; delete before release.

use cps_core::calib::{calibrate_all, CalibConfig};
use cps_core::metrics::normal_error;
use cps_core::solver::{solve, Ablation, SolverConfig};
use cps_core::synth::geometry::{bumpy_cap, central_mask, uniform_albedo};
use cps_core::synth::sweep::ring_rig;
use cps_core::synth::{render, RenderConfig};
use nalgebra::Vector3;

#[test]
#[ignore]
fn scratch_anisotropy_probe() {
    let res = 48usize;
    let g = bumpy_cap(res, 0.55, 12, 0.05, 3).unwrap();
    let albedo = uniform_albedo(&g.normals, Vector3::new(0.9, 0.75, 0.6));
    let center = g.positions.mean_valid().unwrap();
    for mu in [0.0, 10.0, 20.0] {
        let rig = ring_rig(center, 2.0, 65.0, mu).unwrap();
        let bright = render(
            &g.normals,
            &g.positions,
            &albedo,
            &rig,
            &RenderConfig { noise_sigma: 0.0, scale_to_max: true, seed: 3 },
        )
        .unwrap();
        let mut dim = bright.clone();
        for v in dim.data_mut() {
            *v *= 0.03;
        }
        for (label, image) in [("bright", &bright), ("dim", &dim)] {
            for frac in [0.3f64, 0.5] {
                let mut mask = central_mask(res, frac);
                for (i, m) in mask.iter_mut().enumerate() {
                    *m = *m && image.is_valid(i);
                }
                let cal = calibrate_all(
                    image,
                    &g.normals,
                    &g.positions,
                    &mask,
                    &CalibConfig { iterations: 800, seed: 3, ..CalibConfig::default() },
                )
                .unwrap();
                let rels: Vec<f64> = (0..3)
                    .map(|i| {
                        let gt = rig.lights[i].position;
                        (cal.rig.lights[i].position - gt).norm() / (gt - center).norm()
                    })
                    .collect();
                println!(
                    "mu {mu:>4} {label:>6} mask {frac}: rel {:.3} {:.3} {:.3} inliers {} {} {}",
                    rels[0],
                    rels[1],
                    rels[2],
                    cal.lights[0].diagnostics.vanilla_inliers,
                    cal.lights[1].diagnostics.vanilla_inliers,
                    cal.lights[2].diagnostics.vanilla_inliers,
                );
                if frac == 0.5 {
                    for (slabel, srig) in [("gt ", &rig), ("cal", &cal.rig)] {
                        let full = solve(
                            image,
                            srig,
                            &g.positions,
                            Some(&g.normals),
                            &SolverConfig {
                                ablation: Ablation::Full,
                                bin_member_cap: 64,
                                ..SolverConfig::default()
                            },
                        )
                        .unwrap();
                        let cons = solve(
                            image,
                            srig,
                            &g.positions,
                            None,
                            &SolverConfig {
                                ablation: Ablation::Consensus,
                                ..SolverConfig::default()
                            },
                        )
                        .unwrap();
                        println!(
                            "    {label} {slabel}: full {:.3} cons {:.3}",
                            normal_error(&full.normals, &g.normals).unwrap().mean_degrees,
                            normal_error(&cons.normals, &g.normals).unwrap().mean_degrees,
                        );
                    }
                }
            }
        }
    }
}
