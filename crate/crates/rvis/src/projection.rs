//! Point-cloud projection into binary visibility masks.
//!
//! Top-down masks are *registered*: every mask shares one ground-plane pixel
//! grid (the footprint of a reference camera at the aperture-plane center),
//! so pixel m means the same ground spot in every mask and masks can be
//! averaged directly. A pixel is 1 iff that ground spot is visible from the
//! rendered pose, computed by projecting each occluder point through the
//! pose onto the ground and stamping its shadow.
//!
//! Bottom-up masks parameterize the aperture plane orthographically: pixel n
//! is 1 iff the segment from the ground point to that plane position clears
//! all occluder points. Projection from the ground point stamps each
//! occluder's blocked region (an ellipse, elongated at shallow view angles).
//!
//! [`ray_visible`] is the exact segment-distance oracle both renderers
//! approximate; [`oracle`] provides the same predicate behind a spatial
//! index for bulk verification.

use crate::raster::{GridGeom, Mask};
use crate::scene::{AreaSpec, PointCloud};
use crate::{Error, Result};

/// Resolution at which `splat_radius_px` is calibrated; the world-space
/// splat size is constant across resolutions.
const REFERENCE_RES: f64 = 512.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    /// Full field of view per image axis, degrees.
    pub fov_deg: f64,
    /// Pixels per side of the square image.
    pub resolution: usize,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics {
            fov_deg: 50.0,
            resolution: 512,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::InvalidParameter(format!(
                "fov must be in (0, 180), got {}",
                self.fov_deg
            )));
        }
        if self.resolution < 2 {
            return Err(Error::InvalidParameter("resolution must be >= 2".into()));
        }
        Ok(())
    }

    /// Number of pixels per mask, M.
    pub fn pixel_count(&self) -> usize {
        self.resolution * self.resolution
    }
}

/// Discrete synthetic-aperture description.
#[derive(Debug, Clone, PartialEq)]
pub struct ApertureSpec {
    pub altitude_agl_m: f64,
    /// Extent of the aperture plane (the synthetic aperture size).
    pub extent: AreaSpec,
    /// Poses per side of the discrete pose grid.
    pub grid_n: usize,
    /// Pixels per side of bottom-up masks over the aperture plane.
    pub raster_res: usize,
}

impl Default for ApertureSpec {
    fn default() -> Self {
        ApertureSpec {
            altitude_agl_m: 35.0,
            extent: AreaSpec::default(),
            grid_n: 65,
            raster_res: 512,
        }
    }
}

impl ApertureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.altitude_agl_m > 0.0) {
            return Err(Error::InvalidParameter("altitude must be > 0".into()));
        }
        if self.grid_n < 1 {
            return Err(Error::InvalidParameter("grid_n must be >= 1".into()));
        }
        if self.raster_res < 1 {
            return Err(Error::InvalidParameter("raster_res must be >= 1".into()));
        }
        Ok(())
    }

    pub fn pose_count(&self) -> usize {
        self.grid_n * self.grid_n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewDirection {
    /// Straight down from the aperture plane.
    Nadir,
    /// Straight up from the ground.
    Zenith,
}

/// Camera pose; the up-vector is the scene +y axis projected into the image
/// plane, which pins image rows to decreasing world y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: [f64; 3],
    pub view: ViewDirection,
}

impl Pose {
    pub fn nadir(x: f64, y: f64, altitude: f64) -> Self {
        Pose {
            position: [x, y, altitude],
            view: ViewDirection::Nadir,
        }
    }

    pub fn zenith(x: f64, y: f64) -> Self {
        Pose {
            position: [x, y, 0.0],
            view: ViewDirection::Zenith,
        }
    }
}

/// Nadir poses on a regular grid spanning the aperture extent, row-major
/// with row 0 at maximum y; index n runs 0..grid_n^2.
pub fn aperture_poses(spec: &ApertureSpec) -> Vec<Pose> {
    let g = spec.grid_n;
    let (cx, cy) = spec.extent.center();
    let mut poses = Vec::with_capacity(g * g);
    for row in 0..g {
        for col in 0..g {
            let (x, y) = if g == 1 {
                (cx, cy)
            } else {
                let fx = col as f64 / (g as f64 - 1.0);
                let fy = row as f64 / (g as f64 - 1.0);
                (
                    spec.extent.origin.0 + fx * spec.extent.width_m,
                    spec.extent.origin.1 + spec.extent.depth_m - fy * spec.extent.depth_m,
                )
            };
            poses.push(Pose::nadir(x, y, spec.altitude_agl_m));
        }
    }
    poses
}

/// Calibration knobs for converting point clouds to binary masks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    /// Vegetation below this height does not occlude.
    pub ground_threshold_m: f64,
    /// Top-down shadow stamp radius, in pixels at 512 resolution.
    pub splat_radius_px: f64,
    /// 3D radius of the segment-clearance test for bottom-up masks.
    pub occlusion_radius_m: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            ground_threshold_m: 1.0,
            splat_radius_px: 2.0,
            occlusion_radius_m: 0.05,
        }
    }
}

/// Shared projection geometry for one scene + aperture configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub area: AreaSpec,
    pub intr: CameraIntrinsics,
    pub aperture: ApertureSpec,
    pub params: RenderParams,
}

impl Projector {
    pub fn new(
        area: AreaSpec,
        intr: CameraIntrinsics,
        aperture: ApertureSpec,
        params: RenderParams,
    ) -> Result<Self> {
        intr.validate()?;
        aperture.validate()?;
        if !(params.ground_threshold_m >= 0.0)
            || !(params.splat_radius_px >= 0.0)
            || !(params.occlusion_radius_m >= 0.0)
        {
            return Err(Error::InvalidParameter(
                "render parameters must be non-negative".into(),
            ));
        }
        Ok(Projector {
            area,
            intr,
            aperture,
            params,
        })
    }

    pub fn with_defaults(area: AreaSpec) -> Self {
        Projector {
            area,
            intr: CameraIntrinsics::default(),
            aperture: ApertureSpec::default(),
            params: RenderParams::default(),
        }
    }

    fn half_fov_tan(&self) -> f64 {
        (self.intr.fov_deg.to_radians() / 2.0).tan()
    }

    /// Registered ground pixel grid: the reference camera footprint at the
    /// aperture-plane center. Shared by every top-down mask.
    pub fn ground_grid(&self) -> GridGeom {
        let res = self.intr.resolution;
        let span = 2.0 * self.aperture.altitude_agl_m * self.half_fov_tan();
        GridGeom::new(
            res,
            self.aperture.extent.center(),
            (span / res as f64, span / res as f64),
        )
    }

    /// Orthographic raster over the aperture plane for bottom-up masks.
    pub fn plane_grid(&self) -> GridGeom {
        let res = self.aperture.raster_res;
        GridGeom::new(
            res,
            self.aperture.extent.center(),
            (
                self.aperture.extent.width_m / res as f64,
                self.aperture.extent.depth_m / res as f64,
            ),
        )
    }

    /// World-space radius of the top-down shadow stamp (constant across
    /// mask resolutions; `splat_radius_px` is calibrated at 512).
    pub fn splat_radius_m(&self) -> f64 {
        let gsd_ref = 2.0 * self.aperture.altitude_agl_m * self.half_fov_tan() / REFERENCE_RES;
        self.params.splat_radius_px * gsd_ref
    }

    /// Occluder points seen by both renderers: vegetation above the ground
    /// threshold. Oracle comparisons must apply the same filter.
    pub fn occluder_points(&self, cloud: &PointCloud) -> Vec<[f64; 3]> {
        cloud
            .vegetation_points()
            .filter(|p| p[2] > self.params.ground_threshold_m)
            .collect()
    }

    /// Registered top-down visibility mask for one nadir pose.
    ///
    /// Pixel = 1 iff the pixel's ground spot lies inside the scene area and
    /// no occluder shadow (projected from the pose) covers it.
    pub fn render_top_down_mask(&self, pose: &Pose, cloud: &PointCloud) -> Mask {
        assert_eq!(pose.view, ViewDirection::Nadir, "top-down render needs a nadir pose");
        let grid = self.ground_grid();
        let mut mask = Mask::filled(grid.res, false);
        for row in 0..grid.res {
            for col in 0..grid.res {
                let (x, y) = grid.cell_center(row, col);
                if self.area.contains(x, y) {
                    mask.set(row, col, true);
                }
            }
        }

        let alt = pose.position[2];
        let radius = self.splat_radius_m();
        for p in cloud.vegetation_points() {
            if p[2] <= self.params.ground_threshold_m || p[2] >= alt - 1e-9 {
                continue;
            }
            let scale = alt / (alt - p[2]);
            let sx = pose.position[0] + (p[0] - pose.position[0]) * scale;
            let sy = pose.position[1] + (p[1] - pose.position[1]) * scale;
            stamp_zero_disc(&mut mask, &grid, sx, sy, radius);
        }
        mask
    }

    /// Bottom-up visibility mask for one ground point.
    ///
    /// Pixel = 1 iff the segment from the ground point to that aperture
    /// plane position passes no occluder point within `occlusion_radius_m`.
    pub fn render_bottom_up_mask(&self, ground: (f64, f64), cloud: &PointCloud) -> Result<Mask> {
        if !self.area.contains(ground.0, ground.1) {
            return Err(Error::OutOfBounds(format!(
                "ground point ({}, {}) outside the scene area",
                ground.0, ground.1
            )));
        }
        let grid = self.plane_grid();
        let mut mask = Mask::filled(grid.res, true);
        let alt = self.aperture.altitude_agl_m;
        let r = self.params.occlusion_radius_m;

        for p in cloud.vegetation_points() {
            if p[2] <= self.params.ground_threshold_m {
                continue;
            }
            if p[2] >= alt {
                // Only blocks near the upper segment endpoint.
                let dz = p[2] - alt;
                if dz <= r {
                    let hr = (r * r - dz * dz).sqrt();
                    stamp_zero_disc(&mut mask, &grid, p[0], p[1], hr);
                }
                continue;
            }
            let t = alt / p[2];
            let dx = p[0] - ground.0;
            let dy = p[1] - ground.1;
            let qx = ground.0 + t * dx;
            let qy = ground.1 + t * dy;
            // Blocked region on the plane: an ellipse around the pierce
            // point, semi-minor r*t across the view ray and stretched along
            // it by the inverse sine of the elevation angle.
            let b = r * t;
            let horiz = (qx - ground.0).hypot(qy - ground.1);
            if horiz < 1e-12 {
                stamp_zero_disc(&mut mask, &grid, qx, qy, b);
            } else {
                let chord = (horiz * horiz + alt * alt).sqrt();
                let a = b * chord / alt;
                let ux = (qx - ground.0) / horiz;
                let uy = (qy - ground.1) / horiz;
                stamp_zero_ellipse(&mut mask, &grid, qx, qy, ux, uy, a, b);
            }
        }
        Ok(mask)
    }
}

fn cell_span(min_f: f64, max_f: f64, res: usize) -> Option<(usize, usize)> {
    let lo = min_f.floor() as i64 - 1;
    let hi = max_f.ceil() as i64 + 1;
    if hi < 0 || lo >= res as i64 {
        return None;
    }
    Some((lo.max(0) as usize, hi.min(res as i64 - 1) as usize))
}

fn stamp_zero_disc(mask: &mut Mask, grid: &GridGeom, cx: f64, cy: f64, radius: f64) {
    let res = grid.res;
    let left = grid.center_x - grid.width_m() / 2.0;
    let top = grid.center_y + grid.height_m() / 2.0;
    let cols = match cell_span(
        (cx - radius - left) / grid.pitch_x,
        (cx + radius - left) / grid.pitch_x,
        res,
    ) {
        Some(s) => s,
        None => return,
    };
    let rows = match cell_span(
        (top - cy - radius) / grid.pitch_y,
        (top - cy + radius) / grid.pitch_y,
        res,
    ) {
        Some(s) => s,
        None => return,
    };
    let r2 = radius * radius;
    for row in rows.0..=rows.1 {
        for col in cols.0..=cols.1 {
            let (x, y) = grid.cell_center(row, col);
            let (dx, dy) = (x - cx, y - cy);
            if dx * dx + dy * dy <= r2 {
                mask.set(row, col, false);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn stamp_zero_ellipse(
    mask: &mut Mask,
    grid: &GridGeom,
    cx: f64,
    cy: f64,
    ux: f64,
    uy: f64,
    a: f64,
    b: f64,
) {
    let res = grid.res;
    let left = grid.center_x - grid.width_m() / 2.0;
    let top = grid.center_y + grid.height_m() / 2.0;
    let half_w = (a * a * ux * ux + b * b * uy * uy).sqrt();
    let half_h = (a * a * uy * uy + b * b * ux * ux).sqrt();
    let cols = match cell_span(
        (cx - half_w - left) / grid.pitch_x,
        (cx + half_w - left) / grid.pitch_x,
        res,
    ) {
        Some(s) => s,
        None => return,
    };
    let rows = match cell_span(
        (top - cy - half_h) / grid.pitch_y,
        (top - cy + half_h) / grid.pitch_y,
        res,
    ) {
        Some(s) => s,
        None => return,
    };
    for row in rows.0..=rows.1 {
        for col in cols.0..=cols.1 {
            let (x, y) = grid.cell_center(row, col);
            let (dx, dy) = (x - cx, y - cy);
            let xi = dx * ux + dy * uy;
            let eta = -dx * uy + dy * ux;
            if (xi / a) * (xi / a) + (eta / b) * (eta / b) <= 1.0 {
                mask.set(row, col, false);
            }
        }
    }
}

/// Exact visibility oracle: true iff no vegetation point of the cloud lies
/// within `occlusion_radius_m` of the open segment (a, b).
///
/// Symmetric in (a, b) by construction: endpoints are put into a canonical
/// order before any arithmetic, so both call orders run identical float
/// operations.
pub fn ray_visible(a: [f64; 3], b: [f64; 3], cloud: &PointCloud, occlusion_radius_m: f64) -> bool {
    debug_assert!(a != b, "ray_visible requires distinct endpoints");
    let (lo, hi) = canonical_order(a, b);
    let r2 = occlusion_radius_m * occlusion_radius_m;
    cloud
        .vegetation_points()
        .all(|p| segment_distance_sq(lo, hi, p) > r2)
}

fn canonical_order(a: [f64; 3], b: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn segment_distance_sq(a: [f64; 3], b: [f64; 3], p: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1], ap[2] - t * ab[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

pub mod oracle {
    //! Spatially indexed bulk version of the segment oracle. Same predicate
    //! as [`super::ray_visible`], accelerated with an XY bin grid so whole
    //! masks can be re-derived for verification.

    use super::segment_distance_sq;
    use crate::raster::{GridGeom, Mask};

    pub struct SegmentIndex {
        cell_m: f64,
        min_x: f64,
        min_y: f64,
        nx: usize,
        ny: usize,
        bins: Vec<Vec<[f64; 3]>>,
        radius_m: f64,
    }

    impl SegmentIndex {
        /// Index `points` for queries at the given clearance radius.
        pub fn new(points: &[[f64; 3]], radius_m: f64, cell_m: f64) -> Self {
            let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
            let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for p in points {
                min_x = min_x.min(p[0]);
                min_y = min_y.min(p[1]);
                max_x = max_x.max(p[0]);
                max_y = max_y.max(p[1]);
            }
            if points.is_empty() {
                min_x = 0.0;
                min_y = 0.0;
                max_x = 0.0;
                max_y = 0.0;
            }
            let nx = (((max_x - min_x) / cell_m).floor() as usize + 1).max(1);
            let ny = (((max_y - min_y) / cell_m).floor() as usize + 1).max(1);
            let mut bins = vec![Vec::new(); nx * ny];
            for p in points {
                let ix = ((p[0] - min_x) / cell_m) as usize;
                let iy = ((p[1] - min_y) / cell_m) as usize;
                bins[iy.min(ny - 1) * nx + ix.min(nx - 1)].push(*p);
            }
            SegmentIndex {
                cell_m,
                min_x,
                min_y,
                nx,
                ny,
                bins,
                radius_m,
            }
        }

        /// True iff the segment (a, b) clears every indexed point.
        pub fn visible(&self, a: [f64; 3], b: [f64; 3]) -> bool {
            let r = self.radius_m;
            let r2 = r * r;
            let (lo_x, hi_x) = (a[0].min(b[0]) - r, a[0].max(b[0]) + r);
            let (lo_y, hi_y) = (a[1].min(b[1]) - r, a[1].max(b[1]) + r);
            let span = |lo: f64, hi: f64, min: f64, n: usize| -> Option<(usize, usize)> {
                let i0 = ((lo - min) / self.cell_m).floor() as isize;
                let i1 = ((hi - min) / self.cell_m).floor() as isize;
                if i1 < 0 || i0 >= n as isize {
                    return None;
                }
                Some((i0.max(0) as usize, (i1 as usize).min(n - 1)))
            };
            let (ix0, ix1) = match span(lo_x, hi_x, self.min_x, self.nx) {
                Some(s) => s,
                None => return true,
            };
            let (iy0, iy1) = match span(lo_y, hi_y, self.min_y, self.ny) {
                Some(s) => s,
                None => return true,
            };

            // Reject whole bins by XY distance from the segment before
            // testing their points.
            let reject = r + self.cell_m * std::f64::consts::SQRT_2 / 2.0 + self.cell_m;
            let reject2 = reject * reject;
            let a2 = [a[0], a[1], 0.0];
            let b2 = [b[0], b[1], 0.0];
            let degenerate_xy = (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12;
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    let bin = &self.bins[iy * self.nx + ix];
                    if bin.is_empty() {
                        continue;
                    }
                    let cx = self.min_x + (ix as f64 + 0.5) * self.cell_m;
                    let cy = self.min_y + (iy as f64 + 0.5) * self.cell_m;
                    if !degenerate_xy
                        && segment_distance_sq(a2, b2, [cx, cy, 0.0]) > reject2
                    {
                        continue;
                    }
                    for p in bin {
                        if segment_distance_sq(a, b, *p) <= r2 {
                            return false;
                        }
                    }
                }
            }
            true
        }

        /// Re-derive a bottom-up mask pixel by pixel with the exact oracle.
        pub fn bottom_up_mask(&self, ground: (f64, f64), plane: &GridGeom, altitude: f64) -> Mask {
            let mut mask = Mask::filled(plane.res, true);
            let g = [ground.0, ground.1, 0.0];
            for row in 0..plane.res {
                for col in 0..plane.res {
                    let (x, y) = plane.cell_center(row, col);
                    if !self.visible(g, [x, y, altitude]) {
                        mask.set(row, col, false);
                    }
                }
            }
            mask
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_forest, ForestParams, PointLabel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn veg_cloud(points: Vec<[f64; 3]>) -> PointCloud {
        let labels = vec![PointLabel::Vegetation; points.len()];
        PointCloud::new(points, labels).unwrap()
    }

    fn small_projector(res: usize) -> Projector {
        Projector {
            area: AreaSpec::default(),
            intr: CameraIntrinsics {
                fov_deg: 50.0,
                resolution: res,
            },
            aperture: ApertureSpec {
                raster_res: res,
                grid_n: 9,
                ..ApertureSpec::default()
            },
            params: RenderParams::default(),
        }
    }

    #[test]
    fn single_grid_pose_sits_at_center() {
        let spec = ApertureSpec {
            grid_n: 1,
            ..ApertureSpec::default()
        };
        let poses = aperture_poses(&spec);
        assert_eq!(poses.len(), 1);
        assert_eq!(poses[0].position, [0.0, 0.0, 35.0]);
    }

    #[test]
    fn default_grid_has_4225_poses() {
        let poses = aperture_poses(&ApertureSpec::default());
        assert_eq!(poses.len(), 4225);
    }

    #[test]
    fn two_by_two_grid_spans_the_extent() {
        let spec = ApertureSpec {
            grid_n: 2,
            ..ApertureSpec::default()
        };
        let poses = aperture_poses(&spec);
        assert_eq!(poses.len(), 4);
        // row-major from the max-y row
        assert_eq!(poses[0].position, [-16.0, 16.0, 35.0]);
        assert_eq!(poses[1].position, [16.0, 16.0, 35.0]);
        assert_eq!(poses[3].position, [16.0, -16.0, 35.0]);
        let d = ((poses[0].position[0] - poses[1].position[0]).powi(2)
            + (poses[0].position[1] - poses[1].position[1]).powi(2))
        .sqrt();
        assert_eq!(d, 32.0);
    }

    #[test]
    fn empty_cloud_top_down_is_one_inside_area() {
        let proj = small_projector(64);
        let pose = Pose::nadir(0.0, 0.0, 35.0);
        let mask = proj.render_top_down_mask(&pose, &PointCloud::empty());
        let grid = proj.ground_grid();
        for row in 0..grid.res {
            for col in 0..grid.res {
                let (x, y) = grid.cell_center(row, col);
                assert_eq!(mask.get(row, col), proj.area.contains(x, y));
            }
        }
        // the camera footprint exceeds the 32 m area, so the border is 0
        assert!(mask.count_ones() < mask.len());
    }

    #[test]
    fn single_point_blocks_principal_pixel_block() {
        let proj = small_projector(512);
        let pose = Pose::nadir(0.0, 0.0, 35.0);
        let cloud = veg_cloud(vec![[0.0, 0.0, 20.0]]);
        let mask = proj.render_top_down_mask(&pose, &cloud);
        let grid = proj.ground_grid();
        let radius = proj.splat_radius_m();

        // Expected from pinhole arithmetic: the shadow of a point directly
        // under the pose lands at the pose ground position; pixels within
        // the splat radius go dark.
        for row in 200..312 {
            for col in 200..312 {
                let (x, y) = grid.cell_center(row, col);
                let on = mask.get(row, col);
                let inside_disc = (x * x + y * y).sqrt() <= radius;
                assert_eq!(on, !inside_disc, "cell ({row},{col})");
            }
        }

        // The ray oracle agrees except possibly on the disc boundary ring.
        let occluders = proj.occluder_points(&cloud);
        let mut agree = 0usize;
        let mut total = 0usize;
        for row in 0..grid.res {
            for col in 0..grid.res {
                let (x, y) = grid.cell_center(row, col);
                if !proj.area.contains(x, y) {
                    continue;
                }
                let oracle = ray_visible(
                    [x, y, 0.0],
                    pose.position,
                    &veg_cloud(occluders.clone()),
                    proj.params.occlusion_radius_m,
                );
                total += 1;
                if oracle == mask.get(row, col) {
                    agree += 1;
                }
            }
        }
        assert!(agree as f64 / total as f64 > 0.999);
    }

    #[test]
    fn dense_plane_blocks_everything() {
        let proj = small_projector(64);
        let pose = Pose::nadir(0.0, 0.0, 35.0);
        let mut pts = Vec::new();
        let mut x = -25.0;
        while x <= 25.0 {
            let mut y = -25.0;
            while y <= 25.0 {
                pts.push([x, y, 20.0]);
                y += 0.05;
            }
            x += 0.05;
        }
        let mask = proj.render_top_down_mask(&pose, &veg_cloud(pts));
        assert_eq!(mask.count_ones(), 0);
    }

    #[test]
    fn bottom_up_empty_cloud_is_all_ones() {
        let proj = small_projector(64);
        let mask = proj
            .render_bottom_up_mask((0.0, 0.0), &PointCloud::empty())
            .unwrap();
        assert_eq!(mask.count_ones(), mask.len());
    }

    #[test]
    fn bottom_up_outside_area_errors() {
        let proj = small_projector(64);
        let err = proj.render_bottom_up_mask((100.0, 0.0), &PointCloud::empty());
        assert!(matches!(err, Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn midpoint_occluder_blocks_center_pixel() {
        // odd raster: the center cell sits exactly at the plane center
        let mut proj = small_projector(64);
        proj.aperture.raster_res = 65;
        let cloud = veg_cloud(vec![[0.0, 0.0, 17.5]]);
        let mask = proj.render_bottom_up_mask((0.0, 0.0), &cloud).unwrap();
        let grid = proj.plane_grid();
        assert_eq!(grid.cell_center(32, 32), (0.0, 0.0));
        assert!(!mask.get(32, 32));
        // far corners stay visible
        assert!(mask.get(0, 0));
        assert!(mask.get(64, 64));
    }

    #[test]
    fn ray_visible_trivial_cases() {
        assert!(ray_visible(
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 35.0],
            &PointCloud::empty(),
            0.05
        ));
        let cloud = veg_cloud(vec![[0.0, 0.0, 17.5]]);
        assert!(!ray_visible([0.0, 0.0, 0.0], [0.0, 0.0, 35.0], &cloud, 0.0));
    }

    #[test]
    fn ray_visible_symmetry_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<[f64; 3]> = (0..500)
            .map(|_| {
                [
                    rng.gen::<f64>() * 32.0 - 16.0,
                    rng.gen::<f64>() * 32.0 - 16.0,
                    rng.gen::<f64>() * 30.0 + 0.1,
                ]
            })
            .collect();
        let cloud = veg_cloud(pts);
        for _ in 0..1000 {
            let a = [
                rng.gen::<f64>() * 32.0 - 16.0,
                rng.gen::<f64>() * 32.0 - 16.0,
                0.0,
            ];
            let b = [
                rng.gen::<f64>() * 32.0 - 16.0,
                rng.gen::<f64>() * 32.0 - 16.0,
                35.0,
            ];
            let r = rng.gen::<f64>() * 0.5;
            assert_eq!(
                ray_visible(a, b, &cloud, r),
                ray_visible(b, a, &cloud, r)
            );
        }
    }

    #[test]
    fn segment_index_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<[f64; 3]> = (0..800)
            .map(|_| {
                [
                    rng.gen::<f64>() * 32.0 - 16.0,
                    rng.gen::<f64>() * 32.0 - 16.0,
                    rng.gen::<f64>() * 30.0 + 1.1,
                ]
            })
            .collect();
        let cloud = veg_cloud(pts.clone());
        let index = oracle::SegmentIndex::new(&pts, 0.3, 2.0);
        for _ in 0..2000 {
            let a = [
                rng.gen::<f64>() * 40.0 - 20.0,
                rng.gen::<f64>() * 40.0 - 20.0,
                0.0,
            ];
            let b = [
                rng.gen::<f64>() * 40.0 - 20.0,
                rng.gen::<f64>() * 40.0 - 20.0,
                35.0,
            ];
            assert_eq!(index.visible(a, b), ray_visible(a, b, &cloud, 0.3));
        }
    }

    #[test]
    fn masks_are_antitone_in_the_cloud() {
        let proj = small_projector(64);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut draw = |n: usize| -> Vec<[f64; 3]> {
            (0..n)
                .map(|_| {
                    [
                        rng.gen::<f64>() * 30.0 - 15.0,
                        rng.gen::<f64>() * 30.0 - 15.0,
                        rng.gen::<f64>() * 28.0 + 1.5,
                    ]
                })
                .collect()
        };
        for _ in 0..5 {
            let base = draw(200);
            let mut extended = base.clone();
            extended.extend(draw(100));
            let pose = Pose::nadir(3.0, -2.0, 35.0);
            let td_a = proj.render_top_down_mask(&pose, &veg_cloud(base.clone()));
            let td_b = proj.render_top_down_mask(&pose, &veg_cloud(extended.clone()));
            assert!(td_b.subset_of(&td_a));
            let bu_a = proj
                .render_bottom_up_mask((1.0, 1.0), &veg_cloud(base))
                .unwrap();
            let bu_b = proj
                .render_bottom_up_mask((1.0, 1.0), &veg_cloud(extended))
                .unwrap();
            assert!(bu_b.subset_of(&bu_a));
        }
    }

    #[test]
    fn bottom_up_agrees_with_ray_oracle_on_default_scene() {
        let proj = small_projector(256);
        let cloud = generate_forest(
            &AreaSpec::default(),
            &ForestParams {
                seed: 1,
                points_per_tree: 500,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let mask = proj.render_bottom_up_mask((0.0, 0.0), &cloud).unwrap();
        let occluders = proj.occluder_points(&cloud);
        let index = oracle::SegmentIndex::new(&occluders, proj.params.occlusion_radius_m, 2.0);
        let oracle_mask = index.bottom_up_mask((0.0, 0.0), &proj.plane_grid(), 35.0);
        let mut agree = 0usize;
        for i in 0..mask.len() {
            if mask.get_linear(i) == oracle_mask.get_linear(i) {
                agree += 1;
            }
        }
        let frac = agree as f64 / mask.len() as f64;
        assert!(frac >= 0.95, "oracle agreement {frac}");
    }

    #[test]
    fn raster_level_reciprocity_on_default_scene() {
        // Top-down mask value at a ground point's pixel vs the bottom-up
        // mask value at the pose's plane cell, over random pairs.
        let proj = small_projector(256);
        let cloud = generate_forest(
            &AreaSpec::default(),
            &ForestParams {
                seed: 2,
                points_per_tree: 500,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let poses = aperture_poses(&ApertureSpec {
            grid_n: 5,
            raster_res: 256,
            ..ApertureSpec::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grounds: Vec<(f64, f64)> = (0..40)
            .map(|_| {
                (
                    rng.gen::<f64>() * 30.0 - 15.0,
                    rng.gen::<f64>() * 30.0 - 15.0,
                )
            })
            .collect();
        let ground_grid = proj.ground_grid();
        let plane_grid = proj.plane_grid();
        let bottom_masks: Vec<Mask> = grounds
            .iter()
            .map(|&g| proj.render_bottom_up_mask(g, &cloud).unwrap())
            .collect();
        let top_masks: Vec<Mask> = poses
            .iter()
            .map(|p| proj.render_top_down_mask(p, &cloud))
            .collect();
        let mut agree = 0usize;
        let mut total = 0usize;
        for (gi, &g) in grounds.iter().enumerate() {
            let (gr, gc) = ground_grid.nearest_cell(g.0, g.1);
            for (pi, pose) in poses.iter().enumerate() {
                let (pr, pc) = plane_grid.nearest_cell(pose.position[0], pose.position[1]);
                total += 1;
                if top_masks[pi].get(gr, gc) == bottom_masks[gi].get(pr, pc) {
                    agree += 1;
                }
            }
        }
        assert!(total >= 1000);
        let frac = agree as f64 / total as f64;
        assert!(frac >= 0.95, "raster reciprocity {frac}");
    }
}
