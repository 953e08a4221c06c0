//! Sampling-position selection over a coded visibility map.
//!
//! The greedy pass grows a sampling set from a start cell: each iteration
//! forms the candidate set C of cells whose inclusion strictly raises the
//! norm of the bit-wise average visibility, picks the candidate with the
//! largest gain (ties: nearest to the current position, then row-major
//! index), and moves there. It stops when C stays empty for
//! `empty_c_patience` consecutive iterations or `max_iterations` is
//! reached. Multi-start repeats this from random nonzero cells and keeps
//! the best set whose per-point dispersion passes the uniformity threshold.
//!
//! All accept/score decisions are made in integer arithmetic, so results
//! are exactly reproducible.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::visibility::{Code, CodedVisibilityMap};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Norm {
    #[default]
    L1,
    L2,
}

/// Reading of the "maximal gain" selection among candidates: `Gain`
/// maximizes the norm after inclusion; `DiffNorm` maximizes the norm of the
/// difference between the averages with and without the candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionRule {
    #[default]
    Gain,
    DiffNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyConfig {
    /// Uniformity threshold T: accepted solutions need a per-point
    /// visibility dispersion (std of percentages) below this.
    pub variance_threshold_pct: f64,
    pub restarts: usize,
    pub max_iterations: usize,
    /// Consecutive empty-candidate iterations before the loop exits.
    pub empty_c_patience: usize,
    pub rng_seed: u64,
    pub norm: Norm,
    pub selection: SelectionRule,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            variance_threshold_pct: 33.0,
            restarts: 50,
            max_iterations: 200,
            empty_c_patience: 2,
            rng_seed: 0,
            norm: Norm::L1,
            selection: SelectionRule::Gain,
        }
    }
}

impl GreedyConfig {
    fn validate(&self) -> Result<()> {
        if self.restarts < 1 {
            return Err(Error::InvalidParameter("restarts must be >= 1".into()));
        }
        if !(self.variance_threshold_pct > 0.0) {
            return Err(Error::InvalidParameter(
                "variance threshold must be > 0".into(),
            ));
        }
        if self.empty_c_patience < 1 {
            return Err(Error::InvalidParameter("patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// One chosen aperture position with its visibility code.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// (row, col) in the coded-map raster.
    pub cell: (usize, usize),
    /// World position on the aperture plane, meters.
    pub position: [f64; 3],
    pub code: Code,
}

/// Ordered sampling set; insertion order is the sampling order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SamplingSet {
    samples: Vec<Sample>,
}

impl SamplingSet {
    pub fn new() -> Self {
        SamplingSet::default()
    }

    pub fn push(&mut self, sample: Sample) -> Result<()> {
        if self.samples.iter().any(|s| s.cell == sample.cell) {
            return Err(Error::InvalidParameter(format!(
                "duplicate cell {:?} in sampling set",
                sample.cell
            )));
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn get(&self, i: usize) -> &Sample {
        &self.samples[i]
    }
}

/// Per-ground-point visibility fraction across a sampling set.
#[derive(Debug, Clone, PartialEq)]
pub struct BitAverage {
    pub fractions: Vec<f64>,
}

impl BitAverage {
    pub fn k(&self) -> usize {
        self.fractions.len()
    }

    pub fn norm(&self, norm: Norm) -> f64 {
        match norm {
            Norm::L1 => self.fractions.iter().sum(),
            Norm::L2 => self.fractions.iter().map(|f| f * f).sum::<f64>().sqrt(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.fractions.iter().sum::<f64>() / self.fractions.len() as f64
    }

    /// Population standard deviation of the per-point percentages.
    pub fn dispersion_percent(&self) -> f64 {
        let n = self.fractions.len() as f64;
        let mean = self.mean() * 100.0;
        let var = self
            .fractions
            .iter()
            .map(|f| {
                let d = f * 100.0 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        var.sqrt()
    }
}

/// Entry k = fraction of samples in which ground point k is visible.
pub fn bitwise_average(set: &SamplingSet, k: usize) -> Result<BitAverage> {
    if set.is_empty() {
        return Err(Error::InvalidParameter(
            "bitwise average of an empty sampling set".into(),
        ));
    }
    let mut counts = vec![0u64; k];
    for sample in set.samples() {
        if sample.code.k() != k {
            return Err(Error::SizeMismatch(format!(
                "sample code width {} != {k}",
                sample.code.k()
            )));
        }
        for (bit, c) in counts.iter_mut().enumerate() {
            *c += sample.code.bit(bit) as u64;
        }
    }
    let t = set.len() as f64;
    Ok(BitAverage {
        fractions: counts.into_iter().map(|c| c as f64 / t).collect(),
    })
}

/// Summary visibility statistics of a sampling set.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub mean_visibility_percent: f64,
    pub dispersion_percent: f64,
    pub per_point: BitAverage,
}

pub fn metrics(set: &SamplingSet, k: usize) -> Result<Metrics> {
    let per_point = bitwise_average(set, k)?;
    Ok(Metrics {
        mean_visibility_percent: 100.0 * per_point.mean(),
        dispersion_percent: per_point.dispersion_percent(),
        per_point,
    })
}

/// Mean visibility percent after each prefix of the sampling order.
pub fn visibility_curve(set: &SamplingSet, k: usize) -> Result<Vec<f64>> {
    if set.is_empty() {
        return Err(Error::InvalidParameter("empty sampling set".into()));
    }
    let mut counts = vec![0u64; k];
    let mut curve = Vec::with_capacity(set.len());
    for (i, sample) in set.samples().iter().enumerate() {
        for (bit, c) in counts.iter_mut().enumerate() {
            *c += sample.code.bit(bit) as u64;
        }
        let total: u64 = counts.iter().sum();
        curve.push(100.0 * total as f64 / (k as f64 * (i as f64 + 1.0)));
    }
    Ok(curve)
}

// ---------------------------------------------------------------------------
// Greedy sampling
// ---------------------------------------------------------------------------

/// Integer state of the running bit-wise average: per-bit counts plus the
/// aggregates needed for L1/L2 comparisons without float error.
struct AverageState {
    counts: Vec<u64>,
    total: u64,
    sum_sq: u128,
    t: u64,
}

impl AverageState {
    fn new(k: usize) -> Self {
        AverageState {
            counts: vec![0; k],
            total: 0,
            sum_sq: 0,
            t: 0,
        }
    }

    fn add_code(&mut self, map: &CodedVisibilityMap, cell: usize) {
        for b in 0..map.batches() {
            let mut word = map.plane(b)[cell];
            let base = b * map.word_bits();
            while word != 0 {
                let bit = base + word.trailing_zeros() as usize;
                let c = self.counts[bit];
                self.sum_sq += 2 * c as u128 + 1;
                self.counts[bit] = c + 1;
                self.total += 1;
                word &= word - 1;
            }
        }
        self.t += 1;
    }

    /// Sum of current per-bit counts over the set bits of the cell's code.
    fn overlap(&self, map: &CodedVisibilityMap, cell: usize) -> u64 {
        let mut sum = 0;
        for b in 0..map.batches() {
            let mut word = map.plane(b)[cell];
            let base = b * map.word_bits();
            while word != 0 {
                sum += self.counts[base + word.trailing_zeros() as usize];
                word &= word - 1;
            }
        }
        sum
    }

    /// Does including a cell with popcount `p` and overlap `sc` strictly
    /// increase the norm of the average?
    fn increases_norm(&self, norm: Norm, p: u64, sc: u64) -> bool {
        match norm {
            // (total+p)/(t+1) > total/t  <=>  t*p > total
            Norm::L1 => self.t * p > self.total,
            // sqrt(sum_sq + 2sc + p)/(t+1) > sqrt(sum_sq)/t
            Norm::L2 => {
                let t = self.t as u128;
                t * t * (self.sum_sq + 2 * sc as u128 + p as u128)
                    > (t + 1) * (t + 1) * self.sum_sq
            }
        }
    }

    /// Candidate ranking score; denominators are constant within one
    /// iteration, so integer numerators order candidates exactly.
    fn selection_score(&self, norm: Norm, rule: SelectionRule, p: u64, sc: u64) -> i128 {
        let (t, p, sc) = (self.t as i128, p as i128, sc as i128);
        match (norm, rule) {
            (Norm::L1, SelectionRule::Gain) => p,
            (Norm::L1, SelectionRule::DiffNorm) => self.total as i128 + p * t - 2 * sc,
            (Norm::L2, SelectionRule::Gain) => 2 * sc + p,
            (Norm::L2, SelectionRule::DiffNorm) => p * t - 2 * sc,
        }
    }

    fn needs_overlap(norm: Norm, rule: SelectionRule) -> bool {
        !matches!((norm, rule), (Norm::L1, SelectionRule::Gain))
    }
}

fn sample_at(map: &CodedVisibilityMap, cell: usize) -> Sample {
    let (row, col) = (cell / map.res(), cell % map.res());
    let (x, y) = map.georef().grid.cell_center(row, col);
    Sample {
        cell: (row, col),
        position: [x, y, map.georef().altitude_m],
        code: map.cell_code(cell),
    }
}

/// Greedy sampling from a start cell.
///
/// Deterministic in (map, start, config); the norm of the bit-wise average
/// strictly increases with every accepted sample and no cell repeats.
pub fn greedy_sampling(
    map: &CodedVisibilityMap,
    start: (usize, usize),
    config: &GreedyConfig,
) -> Result<SamplingSet> {
    config.validate()?;
    if start.0 >= map.res() || start.1 >= map.res() {
        return Err(Error::OutOfBounds(format!(
            "start cell {start:?} outside a {0}x{0} map",
            map.res()
        )));
    }
    let popcounts: Vec<u32> = {
        let mag = map.magnitude();
        mag.data().to_vec()
    };
    Ok(greedy_from(map, &popcounts, start, config))
}

fn greedy_from(
    map: &CodedVisibilityMap,
    popcounts: &[u32],
    start: (usize, usize),
    config: &GreedyConfig,
) -> SamplingSet {
    let res = map.res();
    let cells = res * res;
    let grid = map.georef().grid;
    let mut in_set = vec![false; cells];
    let mut state = AverageState::new(map.k());
    let need_overlap = AverageState::needs_overlap(config.norm, config.selection);

    let start_cell = start.0 * res + start.1;
    let mut set = SamplingSet::new();
    set.push(sample_at(map, start_cell)).expect("fresh set");
    in_set[start_cell] = true;
    state.add_code(map, start_cell);
    let mut current = grid.cell_center(start.0, start.1);

    let mut empty_streak = 0usize;
    for _ in 0..config.max_iterations {
        let mut best: Option<(i128, f64, usize)> = None;
        for cell in 0..cells {
            if in_set[cell] {
                continue;
            }
            let p = popcounts[cell] as u64;
            let sc = if need_overlap {
                state.overlap(map, cell)
            } else {
                0
            };
            if !state.increases_norm(config.norm, p, sc) {
                continue;
            }
            let score = state.selection_score(config.norm, config.selection, p, sc);
            let (cx, cy) = grid.cell_center(cell / res, cell % res);
            let d2 = (cx - current.0).powi(2) + (cy - current.1).powi(2);
            let better = match &best {
                None => true,
                Some((bs, bd, bc)) => {
                    score > *bs || (score == *bs && (d2 < *bd || (d2 == *bd && cell < *bc)))
                }
            };
            if better {
                best = Some((score, d2, cell));
            }
        }
        match best {
            None => {
                empty_streak += 1;
                if empty_streak >= config.empty_c_patience {
                    break;
                }
            }
            Some((_, _, cell)) => {
                empty_streak = 0;
                in_set[cell] = true;
                state.add_code(map, cell);
                set.push(sample_at(map, cell)).expect("cell not in set");
                current = grid.cell_center(cell / res, cell % res);
            }
        }
    }
    set
}

/// Result of a multi-start search.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStartOutcome {
    pub set: SamplingSet,
    pub metrics: Metrics,
    /// Start cell of the winning run.
    pub start: (usize, usize),
    /// False when no run met the dispersion threshold and the
    /// minimum-dispersion run was returned instead.
    pub constraint_met: bool,
}

/// Run greedy sampling from `restarts` random nonzero-magnitude start cells
/// and keep the best run: maximal average-visibility norm among runs whose
/// dispersion stays below the threshold, with (dispersion, start order) as
/// deterministic tie-breaks.
pub fn multi_start(map: &CodedVisibilityMap, config: &GreedyConfig) -> Result<MultiStartOutcome> {
    config.validate()?;
    let popcounts: Vec<u32> = map.magnitude().data().to_vec();
    let nonzero: Vec<usize> = (0..popcounts.len())
        .filter(|&c| popcounts[c] > 0)
        .collect();
    if nonzero.is_empty() {
        return Err(Error::InvalidParameter(
            "coded map has no nonzero cell".into(),
        ));
    }

    let starts: Vec<usize> = if config.restarts >= nonzero.len() {
        nonzero.clone()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let mut seen = HashSet::new();
        let mut picked = Vec::with_capacity(config.restarts);
        while picked.len() < config.restarts {
            let cell = nonzero[rng.gen_range(0..nonzero.len())];
            if seen.insert(cell) {
                picked.push(cell);
            }
        }
        picked
    };

    let res = map.res();
    let runs: Vec<(SamplingSet, Metrics)> = starts
        .par_iter()
        .map(|&cell| {
            let set = greedy_from(map, &popcounts, (cell / res, cell % res), config);
            let m = metrics(&set, map.k()).expect("non-empty greedy result");
            (set, m)
        })
        .collect();

    // Deterministic selection independent of completion order: maximize
    // (norm), then minimize dispersion, then earliest start.
    let norm_of = |m: &Metrics| m.per_point.norm(config.norm);
    let feasible = |m: &Metrics| m.dispersion_percent < config.variance_threshold_pct;
    let mut winner: Option<usize> = None;
    for (i, (_, m)) in runs.iter().enumerate() {
        if !feasible(m) {
            continue;
        }
        let better = match winner {
            None => true,
            Some(w) => {
                let wm = &runs[w].1;
                norm_of(m) > norm_of(wm)
                    || (norm_of(m) == norm_of(wm)
                        && m.dispersion_percent < wm.dispersion_percent)
            }
        };
        if better {
            winner = Some(i);
        }
    }
    let (index, constraint_met) = match winner {
        Some(i) => (i, true),
        None => {
            let mut fallback = 0usize;
            for (i, (_, m)) in runs.iter().enumerate() {
                let fm = &runs[fallback].1;
                if m.dispersion_percent < fm.dispersion_percent
                    || (m.dispersion_percent == fm.dispersion_percent
                        && norm_of(m) > norm_of(fm))
                {
                    fallback = i;
                }
            }
            (fallback, false)
        }
    };
    let (set, m) = runs.into_iter().nth(index).expect("winner index in range");
    let start_cell = starts[index];
    Ok(MultiStartOutcome {
        set,
        metrics: m,
        start: (start_cell / res, start_cell % res),
        constraint_met,
    })
}

// ---------------------------------------------------------------------------
// Oracle and baselines
// ---------------------------------------------------------------------------

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Enumerate every cell subset of size 1..=budget and return the one
/// maximizing the norm of its bit-wise average; ties resolve to the
/// lexicographically smallest cell sequence. Guarded against blowup.
pub fn exhaustive_search(
    map: &CodedVisibilityMap,
    budget: usize,
    norm: Norm,
) -> Result<SamplingSet> {
    if budget < 1 {
        return Err(Error::InvalidParameter("budget must be >= 1".into()));
    }
    let cells = map.cell_count();
    let budget = budget.min(cells);
    if binomial(cells, budget) > 10_000_000 {
        return Err(Error::InvalidParameter(format!(
            "choose({cells}, {budget}) exceeds the enumeration guard"
        )));
    }

    struct Search<'a> {
        map: &'a CodedVisibilityMap,
        budget: usize,
        state: AverageState,
        stack: Vec<usize>,
        best: Option<(Vec<usize>, u128, u128, u64)>, // cells, total, sum_sq, t
        norm: Norm,
    }

    impl Search<'_> {
        fn better_than_best(&self, total: u128, sum_sq: u128, t: u64) -> bool {
            match &self.best {
                None => true,
                Some((_, bt_total, bt_sumsq, bt)) => match self.norm {
                    // total/t > best: cross-multiply
                    Norm::L1 => total * *bt as u128 > bt_total * t as u128,
                    Norm::L2 => {
                        sum_sq * (*bt as u128 * *bt as u128)
                            > bt_sumsq * (t as u128 * t as u128)
                    }
                },
            }
        }

        fn recurse(&mut self, from: usize) {
            for cell in from..self.map.cell_count() {
                self.state.add_code(self.map, cell);
                self.stack.push(cell);
                if self.better_than_best(self.state.total as u128, self.state.sum_sq, self.state.t)
                {
                    self.best = Some((
                        self.stack.clone(),
                        self.state.total as u128,
                        self.state.sum_sq,
                        self.state.t,
                    ));
                }
                if self.stack.len() < self.budget {
                    self.recurse(cell + 1);
                }
                self.stack.pop();
                self.remove_code(cell);
            }
        }

        fn remove_code(&mut self, cell: usize) {
            for b in 0..self.map.batches() {
                let mut word = self.map.plane(b)[cell];
                let base = b * self.map.word_bits();
                while word != 0 {
                    let bit = base + word.trailing_zeros() as usize;
                    let c = self.state.counts[bit];
                    self.state.sum_sq -= 2 * c as u128 - 1;
                    self.state.counts[bit] = c - 1;
                    self.state.total -= 1;
                    word &= word - 1;
                }
            }
            self.state.t -= 1;
        }
    }

    let mut search = Search {
        map,
        budget,
        state: AverageState::new(map.k()),
        stack: Vec::new(),
        best: None,
        norm,
    };
    search.recurse(0);
    let best = search
        .best
        .expect("at least one subset evaluated")
        .0;
    let mut set = SamplingSet::new();
    for cell in best {
        set.push(sample_at(map, cell))?;
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    /// Centered regular lattice.
    Grid,
    /// Distinct uniformly random cells.
    UniformRandom,
}

/// Blind sampling baselines of a fixed size.
pub fn baseline_sampler(
    map: &CodedVisibilityMap,
    n: usize,
    mode: BaselineMode,
    seed: u64,
) -> Result<SamplingSet> {
    if n < 1 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if n > map.cell_count() {
        return Err(Error::InvalidParameter(format!(
            "n = {n} exceeds {} cells",
            map.cell_count()
        )));
    }
    let res = map.res();
    let mut set = SamplingSet::new();
    match mode {
        BaselineMode::Grid => {
            let side = (n as f64).sqrt().ceil() as usize;
            'outer: for i in 0..side {
                for j in 0..side {
                    if set.len() == n {
                        break 'outer;
                    }
                    let row = (i * 2 + 1) * res / (side * 2);
                    let col = (j * 2 + 1) * res / (side * 2);
                    set.push(sample_at(map, row * res + col))?;
                }
            }
        }
        BaselineMode::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut seen = HashSet::new();
            while set.len() < n {
                let cell = rng.gen_range(0..map.cell_count());
                if seen.insert(cell) {
                    set.push(sample_at(map, cell))?;
                }
            }
        }
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// CSV export
// ---------------------------------------------------------------------------

/// Columns: order,row,col,x_m,y_m,z_m,code_hex,mean_visibility_percent_after
pub fn write_samples_csv<W: Write>(writer: W, set: &SamplingSet, k: usize) -> Result<()> {
    let curve = visibility_curve(set, k)?;
    let mut w = BufWriter::new(writer);
    writeln!(
        w,
        "order,row,col,x_m,y_m,z_m,code_hex,mean_visibility_percent_after"
    )?;
    for (i, sample) in set.samples().iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            i,
            sample.cell.0,
            sample.cell.1,
            sample.position[0],
            sample.position[1],
            sample.position[2],
            sample.code.to_hex(),
            curve[i]
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Parse the [`write_samples_csv`] format. The code width is recovered from
/// the hex column (a multiple of 4 bits).
pub fn read_samples_csv<R: Read>(reader: R) -> Result<SamplingSet> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty samples CSV".into()))?
        .map_err(Error::Io)?;
    if !header.starts_with("order,row,col,x_m,y_m,z_m,code_hex") {
        return Err(Error::Parse(format!("unexpected header '{header}'")));
    }
    let mut set = SamplingSet::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse(format!(
                "expected 8 fields, got {}",
                fields.len()
            )));
        }
        let cell = (
            fields[1]
                .parse()
                .map_err(|_| Error::Parse("bad row".into()))?,
            fields[2]
                .parse()
                .map_err(|_| Error::Parse("bad col".into()))?,
        );
        let coord = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse("bad coordinate".into()))
        };
        let code = Code::from_hex(fields[6].len() * 4, fields[6])?;
        set.push(Sample {
            cell,
            position: [coord(fields[3])?, coord(fields[4])?, coord(fields[5])?],
            code,
        })?;
    }
    if set.is_empty() {
        return Err(Error::Parse("samples CSV has no rows".into()));
    }
    Ok(set)
}

/// Columns: step,mean_visibility_percent
pub fn write_gain_curve_csv<W: Write>(writer: W, curve: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "step,mean_visibility_percent")?;
    for (i, v) in curve.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GridGeom, Mask};
    use crate::visibility::{build_coded_map, PlaneGeoref};

    fn georef(res: usize) -> PlaneGeoref {
        PlaneGeoref {
            grid: GridGeom::new(res, (0.0, 0.0), (1.0, 1.0)),
            altitude_m: 35.0,
        }
    }

    /// Coded map from explicit per-cell words (K <= 8, one batch).
    fn map_from_words(res: usize, k: usize, words: &[u64]) -> CodedVisibilityMap {
        assert_eq!(words.len(), res * res);
        let mut masks = vec![Mask::filled(res, false); k];
        for (cell, &w) in words.iter().enumerate() {
            for (bit, mask) in masks.iter_mut().enumerate() {
                if w >> bit & 1 == 1 {
                    mask.set_linear(cell, true);
                }
            }
        }
        build_coded_map(&masks, 8, georef(res)).unwrap()
    }

    fn sample_with_word(k: usize, bits: &[usize]) -> Sample {
        let mut code = Code::zero(k);
        for &b in bits {
            code.set_bit(b);
        }
        Sample {
            cell: (bits.iter().sum::<usize>(), bits.len()),
            position: [0.0, 0.0, 0.0],
            code,
        }
    }

    #[test]
    fn bitwise_average_single_sample() {
        let mut set = SamplingSet::new();
        set.push(sample_with_word(4, &[0, 2])).unwrap();
        let avg = bitwise_average(&set, 4).unwrap();
        assert_eq!(avg.fractions, vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn bitwise_average_two_samples() {
        let mut set = SamplingSet::new();
        set.push(sample_with_word(4, &[0])).unwrap();
        set.push(sample_with_word(4, &[0, 1])).unwrap();
        let avg = bitwise_average(&set, 4).unwrap();
        assert_eq!(avg.fractions, vec![1.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn bitwise_average_constant_word_is_idempotent() {
        let mut set = SamplingSet::new();
        for i in 0..5 {
            let mut s = sample_with_word(3, &[1, 2]);
            s.cell = (i, 0);
            set.push(s).unwrap();
        }
        let avg = bitwise_average(&set, 3).unwrap();
        assert_eq!(avg.fractions, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn bitwise_average_rejects_empty() {
        assert!(bitwise_average(&SamplingSet::new(), 4).is_err());
    }

    #[test]
    fn metrics_examples() {
        let mut set = SamplingSet::new();
        set.push(sample_with_word(2, &[0])).unwrap();
        set.push(sample_with_word(2, &[0, 1])).unwrap();
        // per-point averages (1.0, 0.5) -> mean 75%
        let m = metrics(&set, 2).unwrap();
        assert_eq!(m.mean_visibility_percent, 75.0);
        assert_eq!(m.dispersion_percent, 25.0);

        let mut full = SamplingSet::new();
        full.push(sample_with_word(3, &[0, 1, 2])).unwrap();
        let m = metrics(&full, 3).unwrap();
        assert_eq!(m.mean_visibility_percent, 100.0);
        assert_eq!(m.dispersion_percent, 0.0);
    }

    #[test]
    fn greedy_full_start_word_terminates_immediately() {
        // start cell already has all K bits: no candidate can increase
        let words = vec![0b1111u64, 0b0011, 0b0101, 0b1000];
        let map = map_from_words(2, 4, &words);
        let set = greedy_sampling(&map, (0, 0), &GreedyConfig::default()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.get(0).cell, (0, 0));
    }

    #[test]
    fn greedy_single_bit_reaches_map_maximum() {
        // K=1: zero start, nearest set cell accepted first
        let words = vec![
            0, 0, 0, 0, //
            0, 1, 0, 0, //
            0, 0, 0, 1, //
            0, 0, 0, 0,
        ];
        let map = map_from_words(4, 1, &words);
        let set = greedy_sampling(&map, (1, 0), &GreedyConfig::default()).unwrap();
        // nearest set cell to (1,0) is (1,1)
        assert_eq!(set.get(1).cell, (1, 1));
        // both set cells get absorbed, then no candidate can raise the
        // average further: final visibility is 2 of 3 samples
        assert_eq!(set.len(), 3);
        let avg = bitwise_average(&set, 1).unwrap();
        assert_eq!(avg.fractions[0], 2.0 / 3.0);
    }

    #[test]
    fn greedy_is_deterministic() {
        let words: Vec<u64> = (0..25).map(|i| (i * 37 % 256) as u64).collect();
        let map = map_from_words(5, 8, &words);
        let a = greedy_sampling(&map, (2, 2), &GreedyConfig::default()).unwrap();
        let b = greedy_sampling(&map, (2, 2), &GreedyConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn greedy_norm_strictly_increases() {
        let words: Vec<u64> = (0..36).map(|i| (i * 73 % 256) as u64).collect();
        let map = map_from_words(6, 8, &words);
        for norm in [Norm::L1, Norm::L2] {
            let config = GreedyConfig {
                norm,
                ..GreedyConfig::default()
            };
            let set = greedy_sampling(&map, (0, 0), &config).unwrap();
            let mut prev = None;
            for t in 1..=set.len() {
                let mut prefix = SamplingSet::new();
                for s in &set.samples()[..t] {
                    prefix.push(s.clone()).unwrap();
                }
                let n = bitwise_average(&prefix, 8).unwrap().norm(norm);
                if let Some(p) = prev {
                    assert!(n > p, "norm did not increase: {p} -> {n}");
                }
                prev = Some(n);
            }
        }
    }

    #[test]
    fn greedy_start_out_of_bounds_errors() {
        let map = map_from_words(2, 2, &[1, 2, 3, 0]);
        assert!(greedy_sampling(&map, (2, 0), &GreedyConfig::default()).is_err());
    }

    #[test]
    fn multi_start_single_restart_equals_greedy() {
        let words: Vec<u64> = (0..25).map(|i| (i * 91 % 256) as u64).collect();
        let map = map_from_words(5, 8, &words);
        let config = GreedyConfig {
            restarts: 1,
            variance_threshold_pct: 1000.0,
            rng_seed: 5,
            ..GreedyConfig::default()
        };
        let out = multi_start(&map, &config).unwrap();
        let direct = greedy_sampling(&map, out.start, &config).unwrap();
        assert_eq!(out.set, direct);
        assert!(out.constraint_met);
    }

    #[test]
    fn multi_start_symmetric_optima_deterministic() {
        // two cells with identical maximal words; everything else zero
        let mut words = vec![0u64; 16];
        words[1] = 0b11;
        words[14] = 0b11;
        let map = map_from_words(4, 2, &words);
        let config = GreedyConfig {
            restarts: 2,
            variance_threshold_pct: 1000.0,
            rng_seed: 3,
            ..GreedyConfig::default()
        };
        let a = multi_start(&map, &config).unwrap();
        let b = multi_start(&map, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multi_start_rejects_all_zero_map() {
        let map = map_from_words(2, 2, &[0, 0, 0, 0]);
        assert!(multi_start(&map, &GreedyConfig::default()).is_err());
    }

    #[test]
    fn exhaustive_budget_one_is_argmax_magnitude() {
        let words = vec![0b0001u64, 0b0111, 0b1111, 0b0011];
        let map = map_from_words(2, 4, &words);
        let set = exhaustive_search(&map, 1, Norm::L1).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.get(0).cell, (1, 0)); // cell 2 = (1,0) has 4 bits
    }

    #[test]
    fn exhaustive_guard_trips() {
        let words: Vec<u64> = vec![1; 64 * 64];
        let map = map_from_words(64, 1, &words);
        assert!(exhaustive_search(&map, 6, Norm::L1).is_err());
    }

    #[test]
    fn greedy_from_argmax_matches_exhaustive_budget_one() {
        let words: Vec<u64> = (0..16).map(|i| (i * 57 % 256) as u64).collect();
        let map = map_from_words(4, 8, &words);
        let mag = map.magnitude();
        let argmax = (0..16).max_by_key(|&c| (mag.data()[c], 15 - c)).unwrap();
        let exh = exhaustive_search(&map, 1, Norm::L1).unwrap();
        assert_eq!(exh.get(0).cell, (argmax / 4, argmax % 4));
        let greedy = greedy_sampling(&map, (argmax / 4, argmax % 4), &GreedyConfig::default())
            .unwrap();
        assert_eq!(greedy.len(), 1);
        assert_eq!(greedy.get(0).cell, exh.get(0).cell);
    }

    #[test]
    fn baseline_grid_positions() {
        let map = map_from_words(8, 1, &vec![1u64; 64]);
        let one = baseline_sampler(&map, 1, BaselineMode::Grid, 0).unwrap();
        assert_eq!(one.get(0).cell, (4, 4));
        let four = baseline_sampler(&map, 4, BaselineMode::Grid, 0).unwrap();
        let cells: Vec<_> = four.samples().iter().map(|s| s.cell).collect();
        assert_eq!(cells, vec![(2, 2), (2, 6), (6, 2), (6, 6)]);
    }

    #[test]
    fn baseline_random_is_seeded() {
        let map = map_from_words(8, 1, &vec![1u64; 64]);
        let a = baseline_sampler(&map, 10, BaselineMode::UniformRandom, 7).unwrap();
        let b = baseline_sampler(&map, 10, BaselineMode::UniformRandom, 7).unwrap();
        assert_eq!(a, b);
        assert!(baseline_sampler(&map, 65, BaselineMode::UniformRandom, 7).is_err());
    }

    #[test]
    fn consistency_with_forward_integration() {
        // Averaging codes equals integrating the per-pose ground-point
        // masks: lay the K=4 bits out as 2x2 masks and run the forward
        // integral over the sampled cells.
        use crate::visibility::{integrate_forward, SelectionVector};
        let words: Vec<u64> = (0..16).map(|i| (i * 29 % 16) as u64).collect();
        let map = map_from_words(4, 4, &words);
        let cells = [3usize, 7, 9, 14];
        let mut set = SamplingSet::new();
        let mut pose_masks = Vec::new();
        for &cell in &cells {
            set.push(sample_at(&map, cell)).unwrap();
            let mut m = Mask::filled(2, false);
            for k in 0..4 {
                if map.bit_at(cell, k) {
                    m.set_linear(k, true);
                }
            }
            pose_masks.push(m);
        }
        let avg = bitwise_average(&set, 4).unwrap();
        let integral =
            integrate_forward(&pose_masks, &SelectionVector::ones(pose_masks.len())).unwrap();
        for k in 0..4 {
            assert_eq!(avg.fractions[k], integral.values[k]);
        }
    }

    #[test]
    fn samples_csv_roundtrip() {
        let words: Vec<u64> = (0..16).map(|i| (3 + i * 11 % 256) as u64).collect();
        let map = map_from_words(4, 8, &words);
        let set = greedy_sampling(&map, (1, 1), &GreedyConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &set, 8).unwrap();
        let back = read_samples_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), set.len());
        for (a, b) in set.samples().iter().zip(back.samples()) {
            assert_eq!(a.cell, b.cell);
            assert_eq!(a.position, b.position);
            assert_eq!(a.code, b.code);
        }
    }
}
