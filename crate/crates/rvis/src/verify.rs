//! Self-contained property verification: reciprocity, decode roundtrip,
//! and monotonicity, reported as named pass/fail checks. Used by the CLI
//! `verify` command and the integration suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::projection::{aperture_poses, ray_visible, ApertureSpec, CameraIntrinsics, Projector};
use crate::raster::Mask;
use crate::scene::{PointCloud, PointLabel};
use crate::visibility::{
    assemble_matrix, build_coded_map, downsample_to_pose_grid, integrate_reciprocal_lowres,
    PlaneGeoref, SelectionVector,
};
use crate::Result;

#[derive(Debug, Clone)]
pub struct VerifySettings {
    /// Random endpoint pairs for the ray-symmetry check.
    pub ray_pairs: usize,
    /// Random (ground point, pose) pairs for the raster reciprocity check.
    pub reciprocity_pairs: usize,
    /// Minimum fraction of agreeing pairs.
    pub agreement_threshold: f64,
    pub seed: u64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            ray_pairs: 10_000,
            reciprocity_pairs: 1000,
            agreement_threshold: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(CheckResult {
            name,
            passed,
            detail,
        });
    }
}

/// Run every check against one scene.
pub fn run_verification(
    projector: &Projector,
    cloud: &PointCloud,
    settings: &VerifySettings,
) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    check_ray_symmetry(projector, cloud, settings, &mut report);
    check_raster_reciprocity(projector, cloud, settings, &mut report)?;
    check_decode_roundtrip(settings, &mut report)?;
    check_monotonicity(projector, cloud, &mut report)?;
    check_pinhole_duality(projector, cloud, &mut report)?;
    Ok(report)
}

fn check_ray_symmetry(
    projector: &Projector,
    cloud: &PointCloud,
    settings: &VerifySettings,
    report: &mut VerifyReport,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0xA1);
    // symmetry must hold on the raw cloud; keep the test cloud small enough
    // for the naive oracle by thinning dense inputs
    let stride = (cloud.vegetation_count() / 2000).max(1);
    let pts: Vec<[f64; 3]> = cloud.vegetation_points().step_by(stride).collect();
    let thin = PointCloud::new(pts.clone(), vec![PointLabel::Vegetation; pts.len()])
        .expect("vegetation points stay valid");
    let area = &projector.area;
    let alt = projector.aperture.altitude_agl_m;
    let mut mismatches = 0usize;
    for _ in 0..settings.ray_pairs {
        let a = [
            area.origin.0 + rng.gen::<f64>() * area.width_m,
            area.origin.1 + rng.gen::<f64>() * area.depth_m,
            rng.gen::<f64>() * alt,
        ];
        let b = [
            area.origin.0 + rng.gen::<f64>() * area.width_m,
            area.origin.1 + rng.gen::<f64>() * area.depth_m,
            rng.gen::<f64>() * alt,
        ];
        if a == b {
            continue;
        }
        let r = rng.gen::<f64>() * 0.2;
        if ray_visible(a, b, &thin, r) != ray_visible(b, a, &thin, r) {
            mismatches += 1;
        }
    }
    report.push(
        "ray-symmetry",
        mismatches == 0,
        format!(
            "{} pairs, {} asymmetric on {} points",
            settings.ray_pairs,
            mismatches,
            pts.len()
        ),
    );
}

fn check_raster_reciprocity(
    projector: &Projector,
    cloud: &PointCloud,
    settings: &VerifySettings,
    report: &mut VerifyReport,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0xB2);
    let poses = aperture_poses(&projector.aperture);
    let n_poses = 25.min(poses.len());
    let mut pose_idx: Vec<usize> = Vec::new();
    while pose_idx.len() < n_poses {
        let i = rng.gen_range(0..poses.len());
        if !pose_idx.contains(&i) {
            pose_idx.push(i);
        }
    }
    let n_grounds = settings.reciprocity_pairs.div_ceil(n_poses);
    let area = &projector.area;
    let grounds: Vec<(f64, f64)> = (0..n_grounds)
        .map(|_| {
            (
                area.origin.0 + rng.gen::<f64>() * area.width_m,
                area.origin.1 + rng.gen::<f64>() * area.depth_m,
            )
        })
        .collect();

    let top_masks: Vec<Mask> = pose_idx
        .par_iter()
        .map(|&i| projector.render_top_down_mask(&poses[i], cloud))
        .collect();
    let plane = projector.plane_grid();
    let extent = &projector.aperture.extent;
    let grid_n = projector.aperture.grid_n;
    let down_masks: Vec<Mask> = grounds
        .par_iter()
        .map(|&g| {
            let mask = projector.render_bottom_up_mask(g, cloud)?;
            Ok(downsample_to_pose_grid(
                &mask,
                &plane,
                extent.origin,
                (extent.width_m, extent.depth_m),
                grid_n,
            ))
        })
        .collect::<Result<_>>()?;

    let ground_grid = projector.ground_grid();
    let mut agree = 0usize;
    let mut total = 0usize;
    for (gi, &g) in grounds.iter().enumerate() {
        let (gr, gc) = ground_grid.nearest_cell(g.0, g.1);
        for (mi, &pi) in pose_idx.iter().enumerate() {
            let (pr, pc) = (pi / grid_n, pi % grid_n);
            total += 1;
            if top_masks[mi].get(gr, gc) == down_masks[gi].get(pr, pc) {
                agree += 1;
            }
        }
    }
    let frac = agree as f64 / total as f64;
    report.push(
        "raster-reciprocity",
        frac >= settings.agreement_threshold && total >= settings.reciprocity_pairs,
        format!("{agree}/{total} pairs agree ({:.2}%)", frac * 100.0),
    );
    Ok(())
}

fn check_decode_roundtrip(settings: &VerifySettings, report: &mut VerifyReport) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0xC3);
    let res = 64;
    let georef = PlaneGeoref {
        grid: crate::raster::GridGeom::new(res, (0.0, 0.0), (0.5, 0.5)),
        altitude_m: 35.0,
    };
    let mut failures = 0usize;
    let mut cases = 0usize;
    for &(k, l) in &[(1usize, 8usize), (21, 24), (240, 24), (40, 16)] {
        for _ in 0..3 {
            let masks: Vec<Mask> = (0..k)
                .map(|_| {
                    let mut m = Mask::filled(res, false);
                    for i in 0..m.len() {
                        if rng.gen::<f64>() < 0.3 {
                            m.set_linear(i, true);
                        }
                    }
                    m
                })
                .collect();
            let map = build_coded_map(&masks, l, georef)?;
            for (bit, mask) in masks.iter().enumerate() {
                cases += 1;
                if &map.decode(bit)? != mask {
                    failures += 1;
                }
            }
        }
    }
    report.push(
        "decode-roundtrip",
        failures == 0,
        format!("{cases} decodes, {failures} mismatches"),
    );
    Ok(())
}

fn check_monotonicity(
    projector: &Projector,
    cloud: &PointCloud,
    report: &mut VerifyReport,
) -> Result<()> {
    // thinning the cloud must never reduce visibility
    let pts: Vec<[f64; 3]> = cloud.vegetation_points().collect();
    let half: Vec<[f64; 3]> = pts.iter().copied().step_by(2).collect();
    let full = PointCloud::new(pts.clone(), vec![PointLabel::Vegetation; pts.len()])?;
    let thin = PointCloud::new(half.clone(), vec![PointLabel::Vegetation; half.len()])?;
    let pose = aperture_poses(&projector.aperture)
        .into_iter()
        .next()
        .expect("at least one pose");
    let td_full = projector.render_top_down_mask(&pose, &full);
    let td_thin = projector.render_top_down_mask(&pose, &thin);
    let center = projector.area.center();
    let bu_full = projector.render_bottom_up_mask(center, &full)?;
    let bu_thin = projector.render_bottom_up_mask(center, &thin)?;
    let ok = td_full.subset_of(&td_thin) && bu_full.subset_of(&bu_thin);
    report.push(
        "occlusion-monotonicity",
        ok,
        format!(
            "top-down {} <= {} ones, bottom-up {} <= {} ones",
            td_full.count_ones(),
            td_thin.count_ones(),
            bu_full.count_ones(),
            bu_thin.count_ones()
        ),
    );
    Ok(())
}

fn check_pinhole_duality(
    projector: &Projector,
    cloud: &PointCloud,
    report: &mut VerifyReport,
) -> Result<()> {
    // small instance: 9x9 poses, 64^2 registered masks
    let small = Projector::new(
        projector.area,
        CameraIntrinsics {
            fov_deg: projector.intr.fov_deg,
            resolution: 64,
        },
        ApertureSpec {
            grid_n: 9,
            ..projector.aperture.clone()
        },
        projector.params,
    )?;
    let poses = aperture_poses(&small.aperture);
    let masks: Vec<Mask> = poses
        .par_iter()
        .map(|p| small.render_top_down_mask(p, cloud))
        .collect();
    let v = assemble_matrix(masks)?;
    let mut ok = true;
    for m in [0usize, 64 * 32 + 32, 64 * 64 - 1] {
        let p_up = SelectionVector::from_indices(v.nrows(), &[m])?;
        let i_up = integrate_reciprocal_lowres(&v, &p_up, 9)?;
        for n in 0..v.ncols() {
            if i_up.values[n] != v.entry(m, n) as u8 as f64 {
                ok = false;
            }
        }
    }
    report.push(
        "pinhole-duality",
        ok,
        "single-pixel selections reproduce rows of V exactly".into(),
    );
    Ok(())
}
