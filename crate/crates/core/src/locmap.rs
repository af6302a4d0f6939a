//! Per-tile MCS maps, a log-distance radio environment simulator, and
//! maximum-likelihood localization from detected MCS values.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_bigint::BigUint;
use num_traits::Float;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const MCS_LO: u8 = 8;
pub const MCS_HI: u8 = 16;
pub const N_MCS: usize = (MCS_HI - MCS_LO + 1) as usize;

fn check_mcs(mcs: u8) -> Result<usize> {
    if (MCS_LO..=MCS_HI).contains(&mcs) {
        Ok((mcs - MCS_LO) as usize)
    } else {
        Err(Error::Domain(format!(
            "MCS {mcs} outside the mapped range {MCS_LO}..={MCS_HI}"
        )))
    }
}

/// Threshold link adaptation: one MCS step per `step_db` above `s_min_db`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkAdaptation {
    pub s_min_db: f64,
    pub step_db: f64,
}

impl Default for LinkAdaptation {
    fn default() -> Self {
        Self {
            s_min_db: 2.0,
            step_db: 2.0,
        }
    }
}

impl LinkAdaptation {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_db > 0.0 && self.step_db.is_finite() && self.s_min_db.is_finite()) {
            return Err(Error::Validation(format!(
                "link adaptation needs a finite s_min and positive step, got {} / {}",
                self.s_min_db, self.step_db
            )));
        }
        Ok(())
    }
}

/// `clamp(8 + floor((sinr - s_min) / step), 8, 16)`. NaN maps to the lowest index.
pub fn sinr_to_mcs(sinr_db: f64, la: &LinkAdaptation) -> u8 {
    let steps = ((sinr_db - la.s_min_db) / la.step_db).floor();
    if steps.is_nan() {
        return MCS_LO;
    }
    (MCS_LO as f64 + steps).clamp(MCS_LO as f64, MCS_HI as f64) as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub row: usize,
    pub col: usize,
    /// Counts for MCS 8..=16.
    pub histogram: [u64; N_MCS],
    /// Count-weighted mean MCS; NaN for an empty histogram.
    pub mean_mcs: f64,
}

impl Tile {
    pub fn from_histogram(row: usize, col: usize, histogram: [u64; N_MCS]) -> Self {
        let total: u64 = histogram.iter().sum();
        let mean_mcs = if total == 0 {
            f64::NAN
        } else {
            let weighted: f64 = histogram
                .iter()
                .enumerate()
                .map(|(i, &c)| (MCS_LO as usize + i) as f64 * c as f64)
                .sum();
            weighted / total as f64
        };
        Self {
            row,
            col,
            histogram,
            mean_mcs,
        }
    }

    pub fn total(&self) -> u64 {
        self.histogram.iter().sum()
    }

    pub fn count(&self, mcs: u8) -> u64 {
        check_mcs(mcs).map(|i| self.histogram[i]).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McsMap {
    pub rows: usize,
    pub cols: usize,
    pub tile_size_m: f64,
    /// Row-major.
    pub tiles: Vec<Tile>,
}

#[derive(Serialize, Deserialize)]
struct TileJson {
    row: usize,
    col: usize,
    histogram: BTreeMap<u8, u64>,
    mean_mcs: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct MapJson {
    rows: usize,
    cols: usize,
    tile_size_m: f64,
    tiles: Vec<TileJson>,
}

impl McsMap {
    pub fn from_histograms(
        rows: usize,
        cols: usize,
        tile_size_m: f64,
        histograms: Vec<[u64; N_MCS]>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || histograms.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} histograms for a {rows}x{cols} grid",
                histograms.len()
            )));
        }
        let tiles = histograms
            .into_iter()
            .enumerate()
            .map(|(i, h)| Tile::from_histogram(i / cols, i % cols, h))
            .collect();
        Ok(Self {
            rows,
            cols,
            tile_size_m,
            tiles,
        })
    }

    pub fn n_tiles(&self) -> usize {
        self.tiles.len()
    }

    pub fn tile(&self, row: usize, col: usize) -> Option<&Tile> {
        (row < self.rows && col < self.cols).then(|| &self.tiles[row * self.cols + col])
    }

    pub fn total_observations(&self) -> u64 {
        self.tiles.iter().map(Tile::total).sum()
    }

    pub fn to_json(&self) -> String {
        let doc = MapJson {
            rows: self.rows,
            cols: self.cols,
            tile_size_m: self.tile_size_m,
            tiles: self
                .tiles
                .iter()
                .map(|t| TileJson {
                    row: t.row,
                    col: t.col,
                    histogram: t
                        .histogram
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| (MCS_LO + i as u8, c))
                        .collect(),
                    mean_mcs: (!t.mean_mcs.is_nan()).then_some(t.mean_mcs),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("map serializes")
    }

    /// Parses a map document; means are recomputed from the histograms.
    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let doc: MapJson = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if doc.tiles.len() != doc.rows * doc.cols {
            return Err(format!(
                "{} tiles listed for a {}x{} grid",
                doc.tiles.len(),
                doc.rows,
                doc.cols
            ));
        }
        let mut hists = Vec::with_capacity(doc.tiles.len());
        for (i, t) in doc.tiles.iter().enumerate() {
            if (t.row, t.col) != (i / doc.cols, i % doc.cols) {
                return Err(format!("tile {i} claims position ({}, {})", t.row, t.col));
            }
            let mut h = [0u64; N_MCS];
            for (&mcs, &c) in &t.histogram {
                h[check_mcs(mcs).map_err(|e| e.to_string())?] = c;
            }
            hists.push(h);
        }
        Self::from_histograms(doc.rows, doc.cols, doc.tile_size_m, hists).map_err(|e| e.to_string())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|m| Error::format(path, m))
    }

    /// Heatmap of mean MCS with the value printed in each tile.
    pub fn to_svg(&self) -> String {
        let cell = 48;
        let (w, h) = (self.cols * cell, self.rows * cell);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        for t in &self.tiles {
            let (x, y) = (t.col * cell, t.row * cell);
            let (fill, label) = if t.mean_mcs.is_nan() {
                ("#cccccc".to_string(), "-".to_string())
            } else {
                let f = (t.mean_mcs - MCS_LO as f64) / (MCS_HI - MCS_LO) as f64;
                (ramp(f), format!("{:.1}", t.mean_mcs))
            };
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#ffffff"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="13" text-anchor="middle" font-family="sans-serif">{label}</text>"#,
                x + cell / 2,
                y + cell / 2 + 5
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Blue to yellow.
pub(crate) fn ramp(f: f64) -> String {
    let f = f.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(48.0, 250.0),
        lerp(64.0, 220.0),
        lerp(160.0, 60.0)
    )
}

/// Log-distance path loss with Gaussian shadowing around one base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioEnvironment {
    pub bs_position: (f64, f64),
    pub sinr_ref_db: f64,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    pub shadowing_sigma_db: f64,
    pub tile_size_m: f64,
    pub link_adaptation: LinkAdaptation,
    pub seed: u64,
}

/// The default base station sits 1 m outside the middle of the short wall of
/// a 6 x 9 m room. Median SINR over the tile centers then runs from about
/// 24 dB down to 0 dB and the link-adapted MCS covers 8 to 16 across the room.
impl Default for RadioEnvironment {
    fn default() -> Self {
        Self {
            bs_position: (-1.0, 3.0),
            sinr_ref_db: 30.0,
            path_loss_exponent: 3.0,
            reference_distance_m: 1.0,
            shadowing_sigma_db: 2.0,
            tile_size_m: 1.0,
            link_adaptation: LinkAdaptation::default(),
            seed: 1,
        }
    }
}

impl RadioEnvironment {
    pub fn validate(&self) -> Result<()> {
        let ok = self.path_loss_exponent > 0.0
            && self.shadowing_sigma_db >= 0.0
            && self.reference_distance_m > 0.0
            && self.tile_size_m > 0.0
            && self.sinr_ref_db.is_finite()
            && self.bs_position.0.is_finite()
            && self.bs_position.1.is_finite();
        if !ok {
            return Err(Error::Validation(format!(
                "radio environment invalid: {self:?} (need exponent > 0, sigma >= 0, positive distances)"
            )));
        }
        self.link_adaptation.validate()
    }

    /// Distance from the base station to the center of tile `(row, col)`;
    /// rows run along y, columns along x.
    pub fn distance_m(&self, row: usize, col: usize) -> f64 {
        let x = (col as f64 + 0.5) * self.tile_size_m;
        let y = (row as f64 + 0.5) * self.tile_size_m;
        (x - self.bs_position.0).hypot(y - self.bs_position.1)
    }

    /// SINR without shadowing.
    pub fn median_sinr_db(&self, row: usize, col: usize) -> f64 {
        let d0 = self.reference_distance_m;
        let d = self.distance_m(row, col).max(d0);
        self.sinr_ref_db - 10.0 * self.path_loss_exponent * (d / d0).log10()
    }

    /// `n` independent shadowed SINR draws at a tile. `stream` separates
    /// independent uses of the same tile (survey vs test).
    pub fn sample_sinr_db(&self, row: usize, col: usize, stream: u64, n: usize) -> Vec<f64> {
        let median = self.median_sinr_db(row, col);
        if self.shadowing_sigma_db == 0.0 {
            return vec![median; n];
        }
        let normal = Normal::new(median, self.shadowing_sigma_db).expect("sigma validated");
        let mut rng = rng_for(self.seed, &[0x534E_5252, stream, row as u64, col as u64]);
        (0..n).map(|_| normal.sample(&mut rng)).collect()
    }

    pub fn sample_mcs(&self, row: usize, col: usize, stream: u64, n: usize) -> Vec<u8> {
        self.sample_sinr_db(row, col, stream, n)
            .into_iter()
            .map(|s| sinr_to_mcs(s, &self.link_adaptation))
            .collect()
    }
}

pub fn simulate_environment(
    env: &RadioEnvironment,
    rows: usize,
    cols: usize,
    obs_per_tile: usize,
) -> Result<McsMap> {
    env.validate()?;
    if obs_per_tile == 0 {
        return Err(Error::Domain("obs_per_tile must be at least 1".into()));
    }
    let per_tile: Vec<Vec<u8>> = (0..rows * cols)
        .map(|i| env.sample_mcs(i / cols, i % cols, 0, obs_per_tile))
        .collect();
    let mut map = build_map(rows, cols, &per_tile)?;
    map.tile_size_m = env.tile_size_m;
    Ok(map)
}

/// Map from row-major per-tile observation lists, 1 m tiles.
pub fn build_map(rows: usize, cols: usize, per_tile_observations: &[Vec<u8>]) -> Result<McsMap> {
    if per_tile_observations.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{} observation lists for a {rows}x{cols} grid",
            per_tile_observations.len()
        )));
    }
    let mut hists = Vec::with_capacity(rows * cols);
    for (i, obs) in per_tile_observations.iter().enumerate() {
        if obs.is_empty() {
            return Err(Error::Validation(format!(
                "tile ({}, {}) has no observations",
                i / cols,
                i % cols
            )));
        }
        let mut h = [0u64; N_MCS];
        for &m in obs {
            h[check_mcs(m)?] += 1;
        }
        hists.push(h);
    }
    McsMap::from_histograms(rows, cols, 1.0, hists)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Located {
    pub row: usize,
    pub col: usize,
    pub score: f64,
}

/// Maximum-likelihood tile for a list of detected MCS values.
///
/// Each tile scores `sum ln((count + alpha) / (total + 9 alpha))` over the
/// observations; the first tile in row-major order wins ties. Scores that
/// agree to within rounding are compared exactly, so a true tie is never
/// decided by summation order.
pub fn locate(map: &McsMap, obs: &[u8], alpha: f64) -> Result<Located> {
    if obs.is_empty() {
        return Err(Error::Domain("no observations to locate from".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("smoothing alpha {alpha} must be >= 0")));
    }
    let idx = obs.iter().map(|&m| check_mcs(m)).collect::<Result<Vec<_>>>()?;
    let mut best: Option<(Located, &Tile)> = None;
    for t in &map.tiles {
        let total = t.total();
        if total == 0 {
            return Err(Error::Domain(format!(
                "tile ({}, {}) has an empty histogram",
                t.row, t.col
            )));
        }
        let denom = total as f64 + N_MCS as f64 * alpha;
        let score: f64 = idx
            .iter()
            .map(|&i| ((t.histogram[i] as f64 + alpha) / denom).ln())
            .sum();
        let wins = match best {
            None => true,
            Some((b, bt)) => {
                let tol = 1e-9 * score.abs().max(b.score.abs()).max(1.0);
                if (score - b.score).abs() > tol {
                    score > b.score
                } else {
                    exact_likelihood_cmp(t, bt, &idx, alpha).is_gt()
                }
            }
        };
        if wins {
            best = Some((
                Located {
                    row: t.row,
                    col: t.col,
                    score,
                },
                t,
            ));
        }
    }
    Ok(best.expect("grid has at least one tile").0)
}

/// `m * 2^e` with an integer mantissa, exact for any finite f64.
fn dyadic(x: f64) -> (BigUint, i64) {
    let (mant, exp, _) = x.integer_decode();
    (BigUint::from(mant), i64::from(exp))
}

fn dyadic_product(factors: impl Iterator<Item = f64>) -> (BigUint, i64) {
    factors.fold((BigUint::from(1u8), 0), |(m, e), x| {
        let (xm, xe) = dyadic(x);
        (m * xm, e + xe)
    })
}

/// Exact order of two tiles' smoothed likelihoods, taking `count + alpha` and
/// `total + 9 alpha` as the f64 values the scores are built from.
fn exact_likelihood_cmp(a: &Tile, b: &Tile, idx: &[usize], alpha: f64) -> Ordering {
    let n = idx.len();
    let den = |t: &Tile| t.total() as f64 + N_MCS as f64 * alpha;
    let num = |t: &Tile| dyadic_product(idx.iter().map(|&i| t.histogram[i] as f64 + alpha));
    let pow = |t: &Tile| dyadic_product(std::iter::repeat_n(den(t), n));
    // a_num / a_den^n  vs  b_num / b_den^n  <=>  a_num * b_den^n  vs  b_num * a_den^n
    let (am, ae) = num(a);
    let (bm, be) = num(b);
    let (adm, ade) = pow(a);
    let (bdm, bde) = pow(b);
    let (lm, le) = (am * bdm, ae + bde);
    let (rm, re) = (bm * adm, be + ade);
    let e = le.min(re);
    let l = lm << usize::try_from(le - e).expect("non-negative shift");
    let r = rm << usize::try_from(re - e).expect("non-negative shift");
    l.cmp(&r)
}

/// Sums `factor x factor` blocks of tiles; the grid shrinks to
/// `ceil(rows / factor) x ceil(cols / factor)` and edge blocks hold the remainder.
pub fn merge_tiles(map: &McsMap, factor: usize) -> Result<McsMap> {
    if factor == 0 {
        return Err(Error::Domain("merge factor must be at least 1".into()));
    }
    let rows = map.rows.div_ceil(factor);
    let cols = map.cols.div_ceil(factor);
    let mut hists = vec![[0u64; N_MCS]; rows * cols];
    for t in &map.tiles {
        let (r, c) = coarsen_index(t.row, t.col, factor, map.rows, map.cols)?;
        for (acc, &v) in hists[r * cols + c].iter_mut().zip(&t.histogram) {
            *acc += v;
        }
    }
    McsMap::from_histograms(rows, cols, map.tile_size_m * factor as f64, hists)
}

/// Position of tile `(row, col)` of a `rows x cols` grid after merging by `factor`.
pub fn coarsen_index(
    row: usize,
    col: usize,
    factor: usize,
    rows: usize,
    cols: usize,
) -> Result<(usize, usize)> {
    if factor == 0 {
        return Err(Error::Domain("merge factor must be at least 1".into()));
    }
    if row >= rows || col >= cols {
        return Err(Error::Domain(format!(
            "tile ({row}, {col}) outside a {rows}x{cols} grid"
        )));
    }
    let r = (row / factor).min(rows.div_ceil(factor) - 1);
    let c = (col / factor).min(cols.div_ceil(factor) - 1);
    Ok((r, c))
}

pub fn chebyshev(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}
