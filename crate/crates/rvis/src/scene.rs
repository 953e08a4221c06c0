//! Scene inputs: procedural forest point clouds and ground points of
//! interest.
//!
//! The forest model is deliberately simple: each tree is a trunk cylinder
//! plus a crown ellipsoid, with surface points sampled uniformly by area.
//! It stands in for a LiDAR scan; only occlusion statistics matter, not
//! botany.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// Trunk cylinder radius in meters, all species presets.
pub const TRUNK_RADIUS_M: f64 = 0.15;
/// Height sampling is clipped below at this value.
pub const MIN_TREE_HEIGHT_M: f64 = 5.0;
/// Minimum spacing between tree centers enforced by rejection.
const MIN_TREE_SPACING_M: f64 = 1.0;
/// Placement retries before a candidate is accepted regardless of spacing.
const MAX_PLACEMENT_RETRIES: usize = 1000;

/// Rectangular ground region; the ground plane is z = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaSpec {
    pub width_m: f64,
    pub depth_m: f64,
    /// Minimum-x/minimum-y corner.
    pub origin: (f64, f64),
}

impl AreaSpec {
    pub fn new(width_m: f64, depth_m: f64, origin: (f64, f64)) -> Result<Self> {
        if !(width_m > 0.0) || !(depth_m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "area must have positive extent, got {width_m}x{depth_m}"
            )));
        }
        if !width_m.is_finite() || !depth_m.is_finite() || !origin.0.is_finite() || !origin.1.is_finite() {
            return Err(Error::InvalidParameter("area parameters must be finite".into()));
        }
        Ok(AreaSpec {
            width_m,
            depth_m,
            origin,
        })
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.origin.0 + self.width_m / 2.0,
            self.origin.1 + self.depth_m / 2.0,
        )
    }

    pub fn area_ha(&self) -> f64 {
        self.width_m * self.depth_m / 10_000.0
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.origin.0
            && x <= self.origin.0 + self.width_m
            && y >= self.origin.1
            && y <= self.origin.1 + self.depth_m
    }
}

impl Default for AreaSpec {
    /// 32 x 32 m centered on the world origin.
    fn default() -> Self {
        AreaSpec {
            width_m: 32.0,
            depth_m: 32.0,
            origin: (-16.0, -16.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpeciesPreset {
    #[default]
    Birch,
}

impl fmt::Display for SpeciesPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpeciesPreset::Birch => write!(f, "birch"),
        }
    }
}

impl std::str::FromStr for SpeciesPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "birch" => Ok(SpeciesPreset::Birch),
            other => Err(Error::InvalidParameter(format!(
                "unknown species preset '{other}'"
            ))),
        }
    }
}

/// Parameters of the procedural forest.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    /// Trees per hectare.
    pub density_per_ha: f64,
    pub species: SpeciesPreset,
    pub seed: u64,
    pub mean_height_m: f64,
    pub height_stddev_m: f64,
    pub crown_radius_m: f64,
    pub points_per_tree: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            density_per_ha: 100.0,
            species: SpeciesPreset::Birch,
            seed: 0,
            mean_height_m: 20.0,
            height_stddev_m: 3.0,
            crown_radius_m: 2.5,
            points_per_tree: 2000,
        }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<()> {
        if !(self.density_per_ha >= 0.0) {
            return Err(Error::InvalidParameter("density must be >= 0".into()));
        }
        if !(self.mean_height_m > 0.0) {
            return Err(Error::InvalidParameter("mean height must be > 0".into()));
        }
        if !(self.height_stddev_m >= 0.0) {
            return Err(Error::InvalidParameter("height stddev must be >= 0".into()));
        }
        if !(self.crown_radius_m > 0.0) {
            return Err(Error::InvalidParameter("crown radius must be > 0".into()));
        }
        if self.points_per_tree < 1 {
            return Err(Error::InvalidParameter("points_per_tree must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLabel {
    Ground,
    Vegetation,
}

/// 3D occluder samples standing in for a LiDAR scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
    labels: Vec<PointLabel>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>, labels: Vec<PointLabel>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::SizeMismatch(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        for (p, l) in points.iter().zip(&labels) {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidParameter("non-finite point coordinate".into()));
            }
            match l {
                PointLabel::Vegetation if p[2] <= 0.0 => {
                    return Err(Error::InvalidParameter(format!(
                        "vegetation point at z={} (must be > 0)",
                        p[2]
                    )))
                }
                PointLabel::Ground if p[2] != 0.0 => {
                    return Err(Error::InvalidParameter(format!(
                        "ground point at z={} (must be 0)",
                        p[2]
                    )))
                }
                _ => {}
            }
        }
        Ok(PointCloud { points, labels })
    }

    pub fn empty() -> Self {
        PointCloud {
            points: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn labels(&self) -> &[PointLabel] {
        &self.labels
    }

    pub fn vegetation_count(&self) -> usize {
        self.labels
            .iter()
            .filter(|l| **l == PointLabel::Vegetation)
            .count()
    }

    /// Vegetation points only, in storage order.
    pub fn vegetation_points(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == PointLabel::Vegetation)
            .map(|(p, _)| *p)
    }
}

/// Ordered ground points of interest; the list index is the code-bit index.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundPoints {
    points: Vec<(f64, f64)>,
}

impl GroundPoints {
    /// Build from explicit coordinates. Order is preserved and defines the
    /// bit assignment.
    pub fn from_points(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("ground point set is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &(x, y) in &points {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::InvalidParameter("non-finite ground point".into()));
            }
            if !seen.insert((x.to_bits(), y.to_bits())) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate ground point ({x}, {y})"
                )));
            }
        }
        Ok(GroundPoints { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn get(&self, k: usize) -> (f64, f64) {
        self.points[k]
    }
}

/// Trees implied by density and area, rounding half away from zero.
pub fn tree_count(area: &AreaSpec, params: &ForestParams) -> usize {
    (params.density_per_ha * area.area_ha()).round() as usize
}

/// Generate a deterministic procedural forest.
///
/// Identical `(area, params)` yield bitwise-identical clouds. Every
/// vegetation point lies on a trunk cylinder or crown ellipsoid surface, so
/// all points project within the area footprint extended by the crown
/// radius (tree centers are inside the area).
pub fn generate_forest(area: &AreaSpec, params: &ForestParams) -> Result<PointCloud> {
    params.validate()?;
    let n_trees = tree_count(area, params);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let mut candidate = (0.0, 0.0);
        for attempt in 0..=MAX_PLACEMENT_RETRIES {
            candidate = (
                area.origin.0 + rng.gen::<f64>() * area.width_m,
                area.origin.1 + rng.gen::<f64>() * area.depth_m,
            );
            let too_close = centers.iter().any(|&(cx, cy)| {
                let (dx, dy) = (cx - candidate.0, cy - candidate.1);
                dx * dx + dy * dy < MIN_TREE_SPACING_M * MIN_TREE_SPACING_M
            });
            if !too_close || attempt == MAX_PLACEMENT_RETRIES {
                break;
            }
        }
        centers.push(candidate);
    }

    let height_dist = if params.height_stddev_m > 0.0 {
        Some(
            Normal::new(params.mean_height_m, params.height_stddev_m)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?,
        )
    } else {
        None
    };

    let mut points = Vec::with_capacity(n_trees * params.points_per_tree);
    for &(cx, cy) in &centers {
        let height = match &height_dist {
            Some(d) => d
                .sample(&mut rng)
                .clamp(MIN_TREE_HEIGHT_M, 2.0 * params.mean_height_m),
            None => params.mean_height_m,
        };
        sample_tree_surface(
            cx,
            cy,
            height,
            params.crown_radius_m,
            params.points_per_tree,
            &mut rng,
            &mut points,
        );
    }

    let labels = vec![PointLabel::Vegetation; points.len()];
    PointCloud::new(points, labels)
}

/// Crown ellipsoid occupies [0.4h, 1.0h] with center at 0.7h; the trunk
/// cylinder runs from the ground to the crown base.
fn tree_shape(height: f64) -> (f64, f64, f64) {
    let crown_center_z = 0.7 * height;
    let crown_semi_z = 0.3 * height;
    let trunk_top = crown_center_z - crown_semi_z;
    (trunk_top, crown_center_z, crown_semi_z)
}

fn sample_tree_surface(
    cx: f64,
    cy: f64,
    height: f64,
    crown_radius: f64,
    n_points: usize,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<[f64; 3]>,
) {
    let (trunk_top, crown_center_z, crown_semi_z) = tree_shape(height);

    let trunk_area = 2.0 * std::f64::consts::PI * TRUNK_RADIUS_M * trunk_top;
    let crown_area = spheroid_surface_area(crown_radius, crown_semi_z);
    let n_trunk = ((n_points as f64) * trunk_area / (trunk_area + crown_area)).round() as usize;
    let n_trunk = n_trunk.min(n_points);

    for _ in 0..n_trunk {
        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
        // keep strictly above the ground plane
        let z = (rng.gen::<f64>() * trunk_top).max(f64::MIN_POSITIVE);
        out.push([
            cx + TRUNK_RADIUS_M * theta.cos(),
            cy + TRUNK_RADIUS_M * theta.sin(),
            z,
        ]);
    }

    // Uniform-by-area sampling of the spheroid surface: draw a uniform
    // direction on the unit sphere and accept with probability proportional
    // to the local area stretch of the sphere-to-spheroid map.
    let a = crown_radius;
    let c = crown_semi_z;
    let max_stretch = a.max(c);
    let mut emitted = 0;
    while emitted < n_points - n_trunk {
        let w = rng.gen::<f64>() * 2.0 - 1.0;
        let phi = rng.gen::<f64>() * std::f64::consts::TAU;
        let s = (1.0 - w * w).sqrt();
        let stretch = (c * c * (1.0 - w * w) + a * a * w * w).sqrt();
        if rng.gen::<f64>() * max_stretch <= stretch {
            out.push([
                cx + a * s * phi.cos(),
                cy + a * s * phi.sin(),
                crown_center_z + c * w,
            ]);
            emitted += 1;
        }
    }
}

/// Exact lateral surface area of a spheroid with equatorial radius `a` and
/// polar semi-axis `c`.
fn spheroid_surface_area(a: f64, c: f64) -> f64 {
    use std::f64::consts::PI;
    if (a - c).abs() < 1e-12 * a.max(c) {
        return 4.0 * PI * a * a;
    }
    if c > a {
        // prolate
        let e = (1.0 - (a * a) / (c * c)).sqrt();
        2.0 * PI * a * a * (1.0 + (c / (a * e)) * e.asin())
    } else {
        // oblate
        let e = (1.0 - (c * c) / (a * a)).sqrt();
        2.0 * PI * a * a * (1.0 + ((1.0 - e * e) / e) * e.atanh())
    }
}

/// Regular rows x cols grid of ground points around `center`, row-major with
/// row 0 at maximum y. Errors if any point falls outside the area.
pub fn make_rect_roi(
    area: &AreaSpec,
    rows: usize,
    cols: usize,
    spacing_m: f64,
    center: (f64, f64),
) -> Result<GroundPoints> {
    if rows * cols < 1 {
        return Err(Error::InvalidParameter("rows x cols must be >= 1".into()));
    }
    if !(spacing_m > 0.0) && rows * cols > 1 {
        return Err(Error::InvalidParameter("spacing must be > 0".into()));
    }
    let mut points = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let x = center.0 + (c as f64 - (cols as f64 - 1.0) / 2.0) * spacing_m;
            let y = center.1 + ((rows as f64 - 1.0) / 2.0 - r as f64) * spacing_m;
            if !area.contains(x, y) {
                return Err(Error::OutOfBounds(format!(
                    "ROI point ({x}, {y}) outside the area"
                )));
            }
            points.push((x, y));
        }
    }
    GroundPoints::from_points(points)
}

/// `n_points` ground points equally spaced by arc length along a polyline,
/// endpoints included.
pub fn make_path_roi(polyline: &[(f64, f64)], n_points: usize) -> Result<GroundPoints> {
    if polyline.len() < 2 {
        return Err(Error::InvalidParameter(
            "polyline needs at least 2 vertices".into(),
        ));
    }
    if n_points < 2 {
        return Err(Error::InvalidParameter("n_points must be >= 2".into()));
    }
    let mut cumulative = Vec::with_capacity(polyline.len());
    cumulative.push(0.0);
    for w in polyline.windows(2) {
        let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
        cumulative.push(cumulative.last().unwrap() + (dx * dx + dy * dy).sqrt());
    }
    let total = *cumulative.last().unwrap();
    if total <= 0.0 {
        return Err(Error::InvalidParameter(
            "degenerate polyline with zero length".into(),
        ));
    }

    let mut points = Vec::with_capacity(n_points);
    let mut seg = 0usize;
    for i in 0..n_points {
        if i == n_points - 1 {
            points.push(*polyline.last().unwrap());
            break;
        }
        let target = total * i as f64 / (n_points as f64 - 1.0);
        while seg + 2 < cumulative.len() && cumulative[seg + 1] <= target {
            seg += 1;
        }
        let seg_len = cumulative[seg + 1] - cumulative[seg];
        let t = if seg_len > 0.0 {
            (target - cumulative[seg]) / seg_len
        } else {
            0.0
        };
        let (x0, y0) = polyline[seg];
        let (x1, y1) = polyline[seg + 1];
        points.push((x0 + t * (x1 - x0), y0 + t * (y1 - y0)));
    }
    GroundPoints::from_points(points)
}

// ---------------------------------------------------------------------------
// Point cloud file I/O
// ---------------------------------------------------------------------------

fn label_to_u8(l: PointLabel) -> u8 {
    match l {
        PointLabel::Ground => 0,
        PointLabel::Vegetation => 1,
    }
}

fn label_from_u8(v: u8) -> Result<PointLabel> {
    match v {
        0 => Ok(PointLabel::Ground),
        1 => Ok(PointLabel::Vegetation),
        other => Err(Error::Parse(format!("unknown label value {other}"))),
    }
}

/// Write as ASCII XYZ: one `x y z label` line per point.
pub fn write_xyz<W: Write>(writer: W, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for (p, l) in cloud.points().iter().zip(cloud.labels()) {
        let label = match l {
            PointLabel::Ground => "ground",
            PointLabel::Vegetation => "vegetation",
        };
        writeln!(w, "{} {} {} {}", p[0], p[1], p[2], label)?;
    }
    w.flush()?;
    Ok(())
}

/// Read ASCII XYZ. The label column is optional; unlabeled points are
/// vegetation when z > 0 and ground otherwise.
pub fn read_xyz<R: Read>(reader: R) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::Parse(format!(
                "line {}: expected 3 or 4 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let coord = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Parse(format!("line {}: bad number '{s}'", lineno + 1)))
        };
        let (x, y, z) = (coord(fields[0])?, coord(fields[1])?, coord(fields[2])?);
        let label = if fields.len() == 4 {
            match fields[3] {
                "vegetation" | "1" => PointLabel::Vegetation,
                "ground" | "0" => PointLabel::Ground,
                other => {
                    return Err(Error::Parse(format!(
                        "line {}: unknown label '{other}'",
                        lineno + 1
                    )))
                }
            }
        } else if z > 0.0 {
            PointLabel::Vegetation
        } else {
            PointLabel::Ground
        };
        points.push([x, y, z]);
        labels.push(label);
    }
    PointCloud::new(points, labels)
}

/// Write as binary little-endian PLY with float32 x/y/z and uint8 label.
pub fn write_ply<W: Write>(writer: W, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(writer);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar label\nend_header\n",
        cloud.len()
    )?;
    for (p, l) in cloud.points().iter().zip(cloud.labels()) {
        for c in p {
            w.write_all(&(*c as f32).to_le_bytes())?;
        }
        w.write_all(&[label_to_u8(*l)])?;
    }
    w.flush()?;
    Ok(())
}

/// Read the PLY subset produced by [`write_ply`].
pub fn read_ply<R: Read>(reader: R) -> Result<PointCloud> {
    let mut r = BufReader::new(reader);
    let mut header = Vec::new();
    // read header lines up to end_header
    loop {
        let mut line = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            r.read_exact(&mut byte)
                .map_err(|_| Error::Parse("unexpected end of PLY header".into()))?;
            if byte[0] == b'\n' {
                break;
            }
            line.push(byte[0]);
        }
        let line = String::from_utf8(line).map_err(|_| Error::Parse("non-UTF8 header".into()))?;
        let done = line.trim() == "end_header";
        header.push(line);
        if done {
            break;
        }
    }
    if header.first().map(|s| s.trim()) != Some("ply") {
        return Err(Error::Parse("missing 'ply' magic".into()));
    }
    if !header
        .iter()
        .any(|l| l.trim() == "format binary_little_endian 1.0")
    {
        return Err(Error::Parse("unsupported PLY format".into()));
    }
    let count: usize = header
        .iter()
        .find_map(|l| l.trim().strip_prefix("element vertex "))
        .ok_or_else(|| Error::Parse("missing vertex element".into()))?
        .trim()
        .parse()
        .map_err(|_| Error::Parse("bad vertex count".into()))?;
    let expected = [
        "property float x",
        "property float y",
        "property float z",
        "property uchar label",
    ];
    for prop in expected {
        if !header.iter().any(|l| l.trim() == prop) {
            return Err(Error::Parse(format!("missing '{prop}'")));
        }
    }

    let mut points = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    let mut rec = [0u8; 13];
    for _ in 0..count {
        r.read_exact(&mut rec)
            .map_err(|_| Error::Parse("truncated PLY payload".into()))?;
        let f = |i: usize| f32::from_le_bytes(rec[i..i + 4].try_into().unwrap()) as f64;
        points.push([f(0), f(4), f(8)]);
        labels.push(label_from_u8(rec[12])?);
    }
    PointCloud::new(points, labels)
}

pub fn save_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let file = std::fs::File::create(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => write_ply(file, cloud),
        _ => write_xyz(file, cloud),
    }
}

pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let file = std::fs::File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => read_ply(file),
        _ => read_xyz(file),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_area() -> AreaSpec {
        AreaSpec::default()
    }

    #[test]
    fn zero_density_yields_no_vegetation() {
        let params = ForestParams {
            density_per_ha: 0.0,
            ..ForestParams::default()
        };
        let cloud = generate_forest(&default_area(), &params).unwrap();
        assert_eq!(cloud.vegetation_count(), 0);
    }

    #[test]
    fn hundred_per_ha_on_default_area_gives_ten_trees() {
        let params = ForestParams::default();
        assert_eq!(tree_count(&default_area(), &params), 10);
        let cloud = generate_forest(&default_area(), &params).unwrap();
        assert_eq!(cloud.len(), 10 * params.points_per_tree);
    }

    #[test]
    fn generation_is_deterministic() {
        let params = ForestParams {
            seed: 7,
            points_per_tree: 50,
            ..ForestParams::default()
        };
        let a = generate_forest(&default_area(), &params).unwrap();
        let b = generate_forest(&default_area(), &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn points_stay_within_extended_footprint_and_height_bounds() {
        let area = default_area();
        let params = ForestParams {
            seed: 3,
            density_per_ha: 400.0,
            points_per_tree: 200,
            ..ForestParams::default()
        };
        let cloud = generate_forest(&area, &params).unwrap();
        let margin = params.crown_radius_m.max(TRUNK_RADIUS_M);
        for p in cloud.points() {
            assert!(p[0] >= area.origin.0 - margin && p[0] <= area.origin.0 + area.width_m + margin);
            assert!(p[1] >= area.origin.1 - margin && p[1] <= area.origin.1 + area.depth_m + margin);
            assert!(p[2] > 0.0 && p[2] <= 2.0 * params.mean_height_m);
        }
    }

    #[test]
    fn vegetation_points_lie_on_tree_surfaces() {
        // One tree with a fixed height makes the shape fully checkable once
        // the (random) center is recovered from the samples.
        let area = AreaSpec::new(10.0, 10.0, (0.0, 0.0)).unwrap();
        let params = ForestParams {
            density_per_ha: 100.0, // 0.01 ha -> exactly 1 tree
            seed: 5,
            height_stddev_m: 0.0,
            points_per_tree: 400,
            ..ForestParams::default()
        };
        assert_eq!(tree_count(&area, &params), 1);
        let cloud = generate_forest(&area, &params).unwrap();
        let h = params.mean_height_m;
        let (trunk_top, crown_cz, crown_sz) = tree_shape(h);
        let crown: Vec<&[f64; 3]> = cloud.points().iter().filter(|p| p[2] > trunk_top).collect();
        assert!(!crown.is_empty());
        let cx = crown.iter().map(|p| p[0]).sum::<f64>() / crown.len() as f64;
        let cy = crown.iter().map(|p| p[1]).sum::<f64>() / crown.len() as f64;
        for p in cloud.points() {
            let rh = (p[0] - cx).hypot(p[1] - cy);
            if p[2] <= trunk_top {
                // trunk ring (tolerance absorbs the center estimate)
                assert!((rh - TRUNK_RADIUS_M).abs() < 0.15, "trunk point off-ring");
            } else {
                let u = rh / params.crown_radius_m;
                let v = (p[2] - crown_cz) / crown_sz;
                let q = u * u + v * v;
                assert!((q - 1.0).abs() < 0.25, "crown point off the ellipsoid: {q}");
            }
        }
    }

    #[test]
    fn rect_roi_single_point_at_center() {
        let gp = make_rect_roi(&default_area(), 1, 1, 1.0, (0.5, -0.25)).unwrap();
        assert_eq!(gp.len(), 1);
        assert_eq!(gp.get(0), (0.5, -0.25));
    }

    #[test]
    fn rect_roi_3x7_gives_21_points_row_major() {
        let gp = make_rect_roi(&default_area(), 3, 7, 1.0, (0.0, 0.0)).unwrap();
        assert_eq!(gp.len(), 21);
        assert_eq!(gp.get(0), (-3.0, 1.0)); // top-left
        assert_eq!(gp.get(6), (3.0, 1.0)); // top-right: row-major
        assert_eq!(gp.get(7), (-3.0, 0.0)); // second row
        assert_eq!(gp.get(20), (3.0, -1.0));
    }

    #[test]
    fn rect_roi_outside_area_errors() {
        let err = make_rect_roi(&default_area(), 3, 7, 10.0, (0.0, 0.0));
        assert!(matches!(err, Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn path_roi_segment_spacing() {
        let gp = make_path_roi(&[(0.0, 0.0), (10.0, 0.0)], 3).unwrap();
        assert_eq!(gp.points(), &[(0.0, 0.0), (5.0, 0.0), (10.0, 0.0)]);
    }

    #[test]
    fn path_roi_240_points() {
        let gp = make_path_roi(&[(-15.0, -15.0), (0.0, 10.0), (15.0, -15.0)], 240).unwrap();
        assert_eq!(gp.len(), 240);
        assert_eq!(gp.get(239), (15.0, -15.0));
    }

    #[test]
    fn path_roi_degenerate_errors() {
        let err = make_path_roi(&[(1.0, 1.0), (1.0, 1.0)], 5);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn ground_points_reject_duplicates() {
        let err = GroundPoints::from_points(vec![(0.0, 0.0), (0.0, 0.0)]);
        assert!(err.is_err());
    }

    #[test]
    fn xyz_roundtrip_exact() {
        let params = ForestParams {
            points_per_tree: 40,
            ..ForestParams::default()
        };
        let cloud = generate_forest(&default_area(), &params).unwrap();
        let mut buf = Vec::new();
        write_xyz(&mut buf, &cloud).unwrap();
        let back = read_xyz(&buf[..]).unwrap();
        assert_eq!(cloud, back);
    }

    #[test]
    fn ply_roundtrip_f32() {
        let cloud = PointCloud::new(
            vec![[1.25, -2.5, 3.0], [0.0, 0.5, 0.0]],
            vec![PointLabel::Vegetation, PointLabel::Ground],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_ply(&mut buf, &cloud).unwrap();
        let back = read_ply(&buf[..]).unwrap();
        assert_eq!(cloud, back); // values chosen exactly representable in f32
    }

    #[test]
    fn spheroid_area_matches_sphere() {
        let s = spheroid_surface_area(2.0, 2.0);
        assert!((s - 4.0 * std::f64::consts::PI * 4.0).abs() < 1e-9);
        // prolate and oblate bracket the sphere of matching radii
        assert!(spheroid_surface_area(2.0, 3.0) > s);
        assert!(spheroid_surface_area(2.0, 1.0) < s);
    }
}
