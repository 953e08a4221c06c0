//! Subcommand implementations.

use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use rvis::formats::{write_gray_pgm, write_mask_pgm, write_rgb_ppm};
use rvis::raster::{Grid, Mask};
use rvis::sampler::{self, visibility_curve};
use rvis::scene::{self, PointCloud};
use rvis::visibility::{bind_ground_points, build_coded_map, PlaneGeoref};

use crate::config::RunConfig;
use crate::CliError;

fn out_file(out_dir: &Path, name: &str) -> PathBuf {
    out_dir.join(name)
}

/// Obtain the scene cloud: load the configured file or generate the forest.
fn scene_cloud(cfg: &RunConfig) -> Result<PointCloud, CliError> {
    match &cfg.scene.cloud_path {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Validation(format!(
                    "cloud file {} does not exist",
                    path.display()
                )));
            }
            Ok(scene::load_cloud(path)?)
        }
        None => Ok(scene::generate_forest(&cfg.area()?, &cfg.forest_params()?)?),
    }
}

pub fn cmd_forest(cfg: &RunConfig) -> Result<(), CliError> {
    let area = cfg.area()?;
    let params = cfg.forest_params()?;
    let cloud = scene::generate_forest(&area, &params)?;
    let name = match cfg.forest.format.as_str() {
        "xyz" => "forest.xyz",
        "ply" => "forest.ply",
        other => {
            return Err(CliError::Validation(format!(
                "unknown cloud format '{other}' (use xyz or ply)"
            )))
        }
    };
    let path = out_file(&cfg.out_dir, name);
    scene::save_cloud(&path, &cloud)?;
    cfg.echo(&cfg.out_dir)?;
    println!(
        "forest: {} trees, {} points -> {}",
        scene::tree_count(&area, &params),
        cloud.len(),
        path.display()
    );
    Ok(())
}

pub fn cmd_rvmap(cfg: &RunConfig) -> Result<(), CliError> {
    let cloud = scene_cloud(cfg)?;
    let projector = cfg.projector()?;
    let roi = cfg.roi()?;
    let masks: Vec<Mask> = roi
        .points()
        .par_iter()
        .map(|&g| projector.render_bottom_up_mask(g, &cloud))
        .collect::<rvis::Result<_>>()?;

    let georef = PlaneGeoref {
        grid: projector.plane_grid(),
        altitude_m: projector.aperture.altitude_agl_m,
    };
    let map = build_coded_map(&masks, cfg.word_bits, georef)?;

    let map_path = out_file(&cfg.out_dir, "rvmap.rvc");
    rvis::visibility::save_rvcode(&map_path, &map)?;
    write_gray_pgm(
        File::create(out_file(&cfg.out_dir, "magnitude.pgm")).map_err(rvis::Error::Io)?,
        &map.magnitude_gray(),
    )?;
    write_rgb_ppm(
        File::create(out_file(&cfg.out_dir, "codes.ppm")).map_err(rvis::Error::Io)?,
        map.res(),
        map.res(),
        &map.code_colors(),
    )?;
    if cfg.dump_masks {
        let dir = cfg.out_dir.join("masks");
        std::fs::create_dir_all(&dir).map_err(rvis::Error::Io)?;
        for (k, mask) in masks.iter().enumerate() {
            write_mask_pgm(
                File::create(dir.join(format!("bottom_up_{k:04}.pgm"))).map_err(rvis::Error::Io)?,
                mask,
            )?;
        }
    }
    cfg.echo(&cfg.out_dir)?;
    println!(
        "rvmap: K={} ground points in {} batches of {} bits, {}x{} cells -> {}",
        map.k(),
        map.batches(),
        map.word_bits(),
        map.res(),
        map.res(),
        map_path.display()
    );
    Ok(())
}

pub fn cmd_plan(cfg: &RunConfig, map_path: Option<PathBuf>) -> Result<(), CliError> {
    let projector = cfg.projector()?;
    let georef = PlaneGeoref {
        grid: projector.plane_grid(),
        altitude_m: projector.aperture.altitude_agl_m,
    };
    let map_path = map_path.unwrap_or_else(|| out_file(&cfg.out_dir, "rvmap.rvc"));
    if !map_path.exists() {
        return Err(CliError::Validation(format!(
            "coded map {} does not exist (run `rvis rvmap` first)",
            map_path.display()
        )));
    }
    let map = rvis::visibility::load_rvcode(&map_path, georef)?;
    let outcome = sampler::multi_start(&map, &cfg.greedy_config())?;

    let samples_path = out_file(&cfg.out_dir, "samples.csv");
    sampler::write_samples_csv(
        File::create(&samples_path).map_err(rvis::Error::Io)?,
        &outcome.set,
        map.k(),
    )?;
    let curve = visibility_curve(&outcome.set, map.k())?;
    sampler::write_gain_curve_csv(
        File::create(out_file(&cfg.out_dir, "gain_curve.csv")).map_err(rvis::Error::Io)?,
        &curve,
    )?;

    // final reconstruction: per-ground-point averages stamped at the ROI
    // positions on the registered ground grid
    let roi = cfg.roi()?;
    if roi.len() != map.k() {
        return Err(CliError::Validation(format!(
            "configured ROI has {} points but the map encodes {}",
            roi.len(),
            map.k()
        )));
    }
    let ground = projector.ground_grid();
    let pixels = bind_ground_points(&roi, &ground)?;
    let mut recon = Grid::filled(ground.res, ground.res, 0u8);
    for (k, &pixel) in pixels.iter().enumerate() {
        let gray = (outcome.metrics.per_point.fractions[k] * 255.0).round() as u8;
        let (row, col) = (pixel / ground.res, pixel % ground.res);
        let half = 2i64;
        for dr in -half..=half {
            for dc in -half..=half {
                let (r, c) = (row as i64 + dr, col as i64 + dc);
                if r >= 0 && c >= 0 && (r as usize) < ground.res && (c as usize) < ground.res {
                    recon.set(r as usize, c as usize, gray);
                }
            }
        }
    }
    write_gray_pgm(
        File::create(out_file(&cfg.out_dir, "reconstruction.pgm")).map_err(rvis::Error::Io)?,
        &recon,
    )?;

    cfg.echo(&cfg.out_dir)?;
    println!(
        "plan: {} samples from start {:?}, mean visibility {:.2}%, dispersion {:.2}%{}",
        outcome.set.len(),
        outcome.start,
        outcome.metrics.mean_visibility_percent,
        outcome.metrics.dispersion_percent,
        if outcome.constraint_met {
            String::new()
        } else {
            format!(
                " (no run met T={}%, returned the most uniform)",
                cfg.greedy.variance_threshold
            )
        }
    );
    Ok(())
}

pub fn cmd_route(
    cfg: &RunConfig,
    samples_path: Option<PathBuf>,
    drones: usize,
    start: Option<(f64, f64)>,
) -> Result<(), CliError> {
    let samples_path = samples_path.unwrap_or_else(|| out_file(&cfg.out_dir, "samples.csv"));
    if !samples_path.exists() {
        return Err(CliError::Validation(format!(
            "samples file {} does not exist (run `rvis plan` first)",
            samples_path.display()
        )));
    }
    let set = sampler::read_samples_csv(File::open(&samples_path).map_err(rvis::Error::Io)?)?;
    if drones == 1 {
        let start = start.unwrap_or_else(|| {
            let extent = cfg.aperture_extent().expect("validated earlier");
            extent.center()
        });
        let route = rvis::route::order_route(&set, start)?;
        let path = out_file(&cfg.out_dir, "route.csv");
        rvis::route::write_route_csv(File::create(&path).map_err(rvis::Error::Io)?, &set, &route)?;
        println!(
            "route: {} stops, {:.2} m -> {}",
            route.order.len(),
            route.length_m,
            path.display()
        );
    } else {
        let plan = rvis::route::assign_batches(&set, drones)?;
        let path = out_file(&cfg.out_dir, "batches.csv");
        rvis::route::write_batches_csv(File::create(&path).map_err(rvis::Error::Io)?, &set, &plan)?;
        println!(
            "route: {} batches for {} drones, {:.2} m inter-batch travel -> {}",
            plan.batches.len(),
            drones,
            plan.travel_m,
            path.display()
        );
    }
    Ok(())
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<bool, CliError> {
    let cloud = scene_cloud(cfg)?;
    let projector = cfg.projector()?;
    let report = rvis::verify::run_verification(&projector, &cloud, &cfg.verify_settings())?;
    for check in &report.checks {
        println!(
            "{} {} - {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    Ok(report.all_passed())
}
