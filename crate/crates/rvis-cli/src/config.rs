//! Run configuration: a sectioned TOML file with strict unknown-key
//! rejection. Every field has a default, so commands run without a file;
//! the fully resolved configuration is echoed into the output directory so
//! a run can be reproduced from its artifacts alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rvis::projection::{ApertureSpec, CameraIntrinsics, Projector, RenderParams};
use rvis::sampler::{GreedyConfig, Norm, SelectionRule};
use rvis::scene::{AreaSpec, ForestParams, GroundPoints, SpeciesPreset};
use rvis::verify::VerifySettings;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; all stage seeds derive from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; 0 picks the core count.
    pub threads: usize,
    /// Bits per coded-map batch plane (L).
    pub word_bits: usize,
    /// Also write every bottom-up mask as a PGM during `rvmap`.
    pub dump_masks: bool,
    pub scene: SceneConfig,
    pub forest: ForestConfig,
    pub camera: CameraConfig,
    pub aperture: ApertureConfig,
    pub roi: RoiConfig,
    pub greedy: GreedySection,
    pub render: RenderSection,
    pub verify: VerifySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            threads: 0,
            word_bits: 24,
            dump_masks: false,
            scene: SceneConfig::default(),
            forest: ForestConfig::default(),
            camera: CameraConfig::default(),
            aperture: ApertureConfig::default(),
            roi: RoiConfig::default(),
            greedy: GreedySection::default(),
            render: RenderSection::default(),
            verify: VerifySection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub width_m: f64,
    pub depth_m: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    /// Load this point cloud (.xyz or .ply) instead of generating a forest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cloud_path: Option<PathBuf>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width_m: 32.0,
            depth_m: 32.0,
            origin_x: -16.0,
            origin_y: -16.0,
            cloud_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub density_per_ha: f64,
    pub species: String,
    pub mean_height_m: f64,
    pub height_stddev_m: f64,
    pub crown_radius_m: f64,
    pub points_per_tree: usize,
    /// Cloud file format written by `forest`: "xyz" or "ply".
    pub format: String,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            density_per_ha: 100.0,
            species: "birch".into(),
            mean_height_m: 20.0,
            height_stddev_m: 3.0,
            crown_radius_m: 2.5,
            points_per_tree: 2000,
            format: "xyz".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub fov_deg: f64,
    pub resolution: usize,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            fov_deg: 50.0,
            resolution: 512,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApertureConfig {
    pub altitude_m: f64,
    pub grid_n: usize,
    pub raster_res: usize,
    /// Aperture-plane extent; defaults to the scene area.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent_width_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent_depth_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent_origin_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent_origin_y: Option<f64>,
}

impl Default for ApertureConfig {
    fn default() -> Self {
        ApertureConfig {
            altitude_m: 35.0,
            grid_n: 65,
            raster_res: 512,
            extent_width_m: None,
            extent_depth_m: None,
            extent_origin_x: None,
            extent_origin_y: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoiKind {
    Rect,
    Path,
    Points,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoiConfig {
    pub kind: RoiKind,
    // rect
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
    pub center_x: f64,
    pub center_y: f64,
    // path
    pub vertices: Vec<[f64; 2]>,
    pub n_points: usize,
    // explicit
    pub points: Vec<[f64; 2]>,
}

impl Default for RoiConfig {
    fn default() -> Self {
        RoiConfig {
            kind: RoiKind::Rect,
            rows: 3,
            cols: 7,
            spacing_m: 1.0,
            center_x: 0.0,
            center_y: 0.0,
            vertices: Vec::new(),
            n_points: 240,
            points: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreedySection {
    pub variance_threshold: f64,
    pub restarts: usize,
    pub max_iterations: usize,
    pub empty_c_patience: usize,
    pub norm: NormName,
    pub selection: SelectionName,
}

impl Default for GreedySection {
    fn default() -> Self {
        GreedySection {
            variance_threshold: 33.0,
            restarts: 50,
            max_iterations: 200,
            empty_c_patience: 2,
            norm: NormName::L1,
            selection: SelectionName::Gain,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormName {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionName {
    Gain,
    DiffNorm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSection {
    pub ground_threshold_m: f64,
    pub splat_radius_px: f64,
    pub occlusion_radius_m: f64,
}

impl Default for RenderSection {
    fn default() -> Self {
        let p = RenderParams::default();
        RenderSection {
            ground_threshold_m: p.ground_threshold_m,
            splat_radius_px: p.splat_radius_px,
            occlusion_radius_m: p.occlusion_radius_m,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub ray_pairs: usize,
    pub reciprocity_pairs: usize,
    pub agreement_threshold: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        let s = VerifySettings::default();
        VerifySection {
            ray_pairs: s.ray_pairs,
            reciprocity_pairs: s.reciprocity_pairs,
            agreement_threshold: s.agreement_threshold,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    /// Write the fully resolved configuration next to the outputs.
    pub fn echo(&self, out_dir: &Path) -> Result<(), CliError> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| CliError::Internal(anyhow::anyhow!("config serialization: {e}")))?;
        std::fs::write(out_dir.join("config.resolved.toml"), text)
            .map_err(|e| CliError::Internal(e.into()))?;
        Ok(())
    }

    pub fn area(&self) -> Result<AreaSpec, CliError> {
        AreaSpec::new(
            self.scene.width_m,
            self.scene.depth_m,
            (self.scene.origin_x, self.scene.origin_y),
        )
        .map_err(CliError::from)
    }

    pub fn aperture_extent(&self) -> Result<AreaSpec, CliError> {
        let scene = self.area()?;
        AreaSpec::new(
            self.aperture.extent_width_m.unwrap_or(scene.width_m),
            self.aperture.extent_depth_m.unwrap_or(scene.depth_m),
            (
                self.aperture.extent_origin_x.unwrap_or(scene.origin.0),
                self.aperture.extent_origin_y.unwrap_or(scene.origin.1),
            ),
        )
        .map_err(CliError::from)
    }

    pub fn forest_params(&self) -> Result<ForestParams, CliError> {
        let species: SpeciesPreset = self
            .forest
            .species
            .parse()
            .map_err(|e: rvis::Error| CliError::Validation(e.to_string()))?;
        Ok(ForestParams {
            density_per_ha: self.forest.density_per_ha,
            species,
            seed: rvis::rng::derive_seed(self.seed, rvis::rng::stream::FOREST),
            mean_height_m: self.forest.mean_height_m,
            height_stddev_m: self.forest.height_stddev_m,
            crown_radius_m: self.forest.crown_radius_m,
            points_per_tree: self.forest.points_per_tree,
        })
    }

    pub fn projector(&self) -> Result<Projector, CliError> {
        Projector::new(
            self.area()?,
            CameraIntrinsics {
                fov_deg: self.camera.fov_deg,
                resolution: self.camera.resolution,
            },
            ApertureSpec {
                altitude_agl_m: self.aperture.altitude_m,
                extent: self.aperture_extent()?,
                grid_n: self.aperture.grid_n,
                raster_res: self.aperture.raster_res,
            },
            RenderParams {
                ground_threshold_m: self.render.ground_threshold_m,
                splat_radius_px: self.render.splat_radius_px,
                occlusion_radius_m: self.render.occlusion_radius_m,
            },
        )
        .map_err(CliError::from)
    }

    pub fn roi(&self) -> Result<GroundPoints, CliError> {
        let area = self.area()?;
        let points = match self.roi.kind {
            RoiKind::Rect => rvis::scene::make_rect_roi(
                &area,
                self.roi.rows,
                self.roi.cols,
                self.roi.spacing_m,
                (self.roi.center_x, self.roi.center_y),
            )?,
            RoiKind::Path => {
                let vertices: Vec<(f64, f64)> =
                    self.roi.vertices.iter().map(|v| (v[0], v[1])).collect();
                rvis::scene::make_path_roi(&vertices, self.roi.n_points)?
            }
            RoiKind::Points => {
                let points: Vec<(f64, f64)> =
                    self.roi.points.iter().map(|v| (v[0], v[1])).collect();
                GroundPoints::from_points(points)?
            }
        };
        for &(x, y) in points.points() {
            if !area.contains(x, y) {
                return Err(CliError::Validation(format!(
                    "ROI point ({x}, {y}) outside the scene area"
                )));
            }
        }
        Ok(points)
    }

    pub fn greedy_config(&self) -> GreedyConfig {
        GreedyConfig {
            variance_threshold_pct: self.greedy.variance_threshold,
            restarts: self.greedy.restarts,
            max_iterations: self.greedy.max_iterations,
            empty_c_patience: self.greedy.empty_c_patience,
            rng_seed: rvis::rng::derive_seed(self.seed, rvis::rng::stream::MULTI_START),
            norm: match self.greedy.norm {
                NormName::L1 => Norm::L1,
                NormName::L2 => Norm::L2,
            },
            selection: match self.greedy.selection {
                SelectionName::Gain => SelectionRule::Gain,
                SelectionName::DiffNorm => SelectionRule::DiffNorm,
            },
        }
    }

    pub fn verify_settings(&self) -> VerifySettings {
        VerifySettings {
            ray_pairs: self.verify.ray_pairs,
            reciprocity_pairs: self.verify.reciprocity_pairs,
            agreement_threshold: self.verify.agreement_threshold,
            seed: rvis::rng::derive_seed(self.seed, rvis::rng::stream::VERIFY),
        }
    }
}
