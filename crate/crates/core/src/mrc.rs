//! Pre-averaged (modulated) realised covariance from synchronised log prices,
//! rolling per-window pair series, and price ingestion from CSV.

use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GrouError, Result};
use crate::simulate::{SampledPath, TwoScaleGrid};

const NS_PER_SEC: i64 = 1_000_000_000;
const NS_PER_DAY: i64 = 86_400 * NS_PER_SEC;

#[derive(Debug, Clone, PartialEq)]
pub struct PriceMatrix {
    times: Vec<f64>,
    prices: DMatrix<f64>,
    assets: Vec<String>,
}

impl PriceMatrix {
    /// `times` in seconds, strictly increasing; one row of log prices per time.
    pub fn new(times: Vec<f64>, prices: DMatrix<f64>, assets: Vec<String>) -> Result<Self> {
        if times.len() < 2 {
            return Err(GrouError::Length(format!(
                "{} price rows; need at least 2",
                times.len()
            )));
        }
        if prices.nrows() != times.len() || prices.ncols() != assets.len() {
            return Err(GrouError::Length(format!(
                "prices are {}×{}, expected {}×{}",
                prices.nrows(),
                prices.ncols(),
                times.len(),
                assets.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(GrouError::Domain(
                "price times must be finite and strictly increasing".into(),
            ));
        }
        if prices.iter().any(|x| !x.is_finite()) {
            return Err(GrouError::Domain("non-finite price".into()));
        }
        Ok(PriceMatrix { times, prices, assets })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn d(&self) -> usize {
        self.assets.len()
    }

    fn slice(&self, start: usize, len: usize) -> Result<Self> {
        PriceMatrix::new(
            self.times[start..start + len].to_vec(),
            self.prices.rows(start, len).into_owned(),
            self.assets.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MrcConfig {
    pub delta: f64,
    pub theta: f64,
    pub is_corr: bool,
}

impl Default for MrcConfig {
    fn default() -> Self {
        MrcConfig {
            delta: 0.5,
            theta: 1.0,
            is_corr: false,
        }
    }
}

impl MrcConfig {
    fn check(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(GrouError::Config(format!("delta = {} not in (0, 1)", self.delta)));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(GrouError::Config(format!("theta = {} must be positive", self.theta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MrcWindow {
    /// `⌈(n−1)^δ θ⌉`
    pub n_window: usize,
    /// Even pre-averaging window.
    pub k_n: usize,
    /// Number of pre-averaged returns, `n − k_n + 1`.
    pub m: usize,
}

pub fn mrc_window(n: usize, cfg: &MrcConfig) -> Result<MrcWindow> {
    cfg.check()?;
    if n < 2 {
        return Err(GrouError::Window(format!("{n} observations")));
    }
    let raw = (((n - 1) as f64).powf(cfg.delta) * cfg.theta).ceil();
    if !(raw.is_finite() && raw >= 1.0) {
        return Err(GrouError::Window(format!("window length {raw} from n = {n}")));
    }
    let n_window = raw as usize;
    let k_n = if n_window % 2 == 0 { n_window } else { n_window + 1 };
    if n <= k_n {
        return Err(GrouError::Window(format!(
            "n = {n} does not exceed the window k_n = {k_n}"
        )));
    }
    Ok(MrcWindow {
        n_window,
        k_n,
        m: n - k_n + 1,
    })
}

fn scaling(n: usize, w: &MrcWindow) -> f64 {
    ((n - 1) as f64 / w.m as f64) * (12.0 / w.k_n as f64)
}

/// Direct double loop over windows and half-windows.
pub fn mrc_reference(prices: &DMatrix<f64>, cfg: &MrcConfig) -> Result<DMatrix<f64>> {
    let (n, d) = prices.shape();
    let w = mrc_window(n, cfg)?;
    let half = w.k_n / 2;
    let mut cov = DMatrix::zeros(d, d);
    let mut ybar = vec![0.0; d];
    for i in 0..w.m {
        for (a, y) in ybar.iter_mut().enumerate() {
            let mut fwd = 0.0;
            for j in i + half..i + w.k_n {
                fwd += prices[(j, a)];
            }
            let mut bwd = 0.0;
            for j in i..i + half {
                bwd += prices[(j, a)];
            }
            *y = (fwd - bwd) / w.k_n as f64;
        }
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += ybar[a] * ybar[b];
            }
        }
    }
    Ok(cov * scaling(n, &w))
}

/// Same arithmetic as [`mrc_reference`], with each half-window sum formed
/// once and shared by the two windows that use it, and only the upper
/// triangle accumulated.
pub fn mrc_covariance(prices: &DMatrix<f64>, cfg: &MrcConfig) -> Result<DMatrix<f64>> {
    let (n, d) = prices.shape();
    let w = mrc_window(n, cfg)?;
    let half = w.k_n / 2;
    let n_sums = n - half + 1;
    let sums: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|a| {
            let col = prices.column(a);
            (0..n_sums)
                .map(|t| {
                    let mut s = 0.0;
                    for j in t..t + half {
                        s += col[j];
                    }
                    s
                })
                .collect()
        })
        .collect();
    let k = w.k_n as f64;
    let mut cov = DMatrix::zeros(d, d);
    let mut ybar = vec![0.0; d];
    for i in 0..w.m {
        for (a, y) in ybar.iter_mut().enumerate() {
            *y = (sums[a][i + half] - sums[a][i]) / k;
        }
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] += ybar[a] * ybar[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    Ok(cov * scaling(n, &w))
}

pub fn cov_to_corr(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = cov.nrows();
    let sd: Vec<f64> = (0..d).map(|a| cov[(a, a)].sqrt()).collect();
    if let Some(a) = sd.iter().position(|s| !(*s > 0.0)) {
        return Err(GrouError::Numerical(format!(
            "asset {a} has zero variance; correlation undefined"
        )));
    }
    Ok(DMatrix::from_fn(d, d, |a, b| {
        if a == b {
            1.0
        } else {
            cov[(a, b)] / (sd[a] * sd[b])
        }
    }))
}

/// `"A-B"` for every asset pair `a < b`, in row-major upper-triangle order.
pub fn pair_labels(assets: &[String]) -> Vec<String> {
    let d = assets.len();
    (0..d)
        .flat_map(|a| (a + 1..d).map(move |b| (a, b)))
        .map(|(a, b)| format!("{}-{}", assets[a], assets[b]))
        .collect()
}

fn upper_triangle(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    (0..d).flat_map(|a| (a + 1..d).map(move |b| m[(a, b)])).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrcOutput {
    pub matrix: DMatrix<f64>,
    pub pairs: Vec<String>,
    pub upper: Vec<f64>,
}

pub fn mrc(prices: &PriceMatrix, cfg: &MrcConfig) -> Result<MrcOutput> {
    let cov = mrc_covariance(&prices.prices, cfg)?;
    let matrix = if cfg.is_corr { cov_to_corr(&cov)? } else { cov };
    Ok(MrcOutput {
        upper: upper_triangle(&matrix),
        pairs: pair_labels(&prices.assets),
        matrix,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingMrc {
    /// Window start times in seconds.
    pub starts: Vec<f64>,
    pub pairs: Vec<String>,
    /// One row per window, one column per pair.
    pub values: DMatrix<f64>,
}

impl RollingMrc {
    /// Pair series on a uniform grid with spacing `mesh`.
    pub fn to_path(&self, mesh: f64, coarse_ratio: usize) -> Result<SampledPath> {
        if !(mesh > 0.0) {
            return Err(GrouError::Config(format!("mesh {mesh} must be positive")));
        }
        let times = (0..self.starts.len()).map(|i| i as f64 * mesh).collect();
        let grid = TwoScaleGrid::with_ratio(times, coarse_ratio)?;
        SampledPath::new(grid, self.values.clone(), self.pairs.clone())
    }
}

/// One MRC evaluation per window `[s, s + window)`, windows starting at the
/// first observation of each day and every `step` after it; windows never
/// cross a day boundary. Windows with fewer than `min_obs` points, or where
/// the estimator fails, are skipped with a warning.
pub fn rolling_mrc(
    prices: &PriceMatrix,
    cfg: &MrcConfig,
    window: f64,
    step: f64,
    min_obs: usize,
) -> Result<RollingMrc> {
    cfg.check()?;
    if !(window > 0.0 && step > 0.0 && window >= step) {
        return Err(GrouError::Config(format!(
            "need window >= step > 0, got window {window}, step {step}"
        )));
    }
    let t = &prices.times;
    let spacing = t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let eps = 1e-9 * window;

    let mut bounds: Vec<(f64, usize, usize)> = Vec::new();
    let mut day_start = 0;
    while day_start < t.len() {
        let day = (t[day_start] / 86_400.0).floor();
        let day_end = day_start
            + t[day_start..]
                .iter()
                .take_while(|&&x| (x / 86_400.0).floor() == day)
                .count();
        let last = t[day_end - 1];
        let mut s = t[day_start];
        while s + window <= last + spacing + eps {
            let lo = day_start + t[day_start..day_end].partition_point(|&x| x < s - eps);
            let hi = day_start + t[day_start..day_end].partition_point(|&x| x < s + window - eps);
            bounds.push((s, lo, hi));
            s += step;
        }
        day_start = day_end;
    }

    let evaluated: Vec<Option<(f64, Vec<f64>)>> = bounds
        .par_iter()
        .map(|&(s, lo, hi)| {
            if hi - lo < min_obs.max(2) {
                warn!("rolling MRC: window at {s} has {} observations; skipped", hi - lo);
                return None;
            }
            match prices.slice(lo, hi - lo).and_then(|p| mrc(&p, cfg)) {
                Ok(out) => Some((s, out.upper)),
                Err(e) => {
                    warn!("rolling MRC: window at {s} skipped: {e}");
                    None
                }
            }
        })
        .collect();
    let kept: Vec<(f64, Vec<f64>)> = evaluated.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(GrouError::Window("no rolling window produced an estimate".into()));
    }
    let pairs = pair_labels(&prices.assets);
    let values = DMatrix::from_fn(kept.len(), pairs.len(), |r, c| kept[r].1[c]);
    Ok(RollingMrc {
        starts: kept.into_iter().map(|k| k.0).collect(),
        pairs,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// Bin width in seconds.
    pub frequency: f64,
    /// Keep 09:30–16:00 only.
    pub regular_hours: bool,
    /// Narrow regular hours to 10:30–15:00.
    pub trim_open_close: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            frequency: 1.0,
            regular_hours: true,
            trim_open_close: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub prices: PriceMatrix,
    pub rows_read: usize,
    pub bad_rows: usize,
}

/// Epoch nanoseconds, or an ISO-8601 date-time read as market-local wall time.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) {
        return s.parse().ok();
    }
    let naive = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        dt.naive_local()
    } else {
        [
            "%Y-%m-%dT%H:%M:%S%.f",
            "%Y-%m-%d %H:%M:%S%.f",
            "%Y-%m-%dT%H:%M",
            "%Y-%m-%d %H:%M",
        ]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())?
    };
    naive.and_utc().timestamp_nanos_opt()
}

pub fn ingest_prices(path: &Path, cfg: &IngestConfig) -> Result<IngestReport> {
    let file = std::fs::File::open(path).map_err(|e| GrouError::io(path, e))?;
    ingest_reader(file, cfg)
}

/// Bins ticks at `cfg.frequency`, keeping the last price seen in each bin and
/// carrying it forward through empty bins; bins are labelled by their start.
/// Empty cells mean "no update". Rows with a bad timestamp, a wrong field
/// count or a non-positive price are counted and skipped.
pub fn ingest_reader<R: Read>(reader: R, cfg: &IngestConfig) -> Result<IngestReport> {
    if !(cfg.frequency > 0.0 && cfg.frequency.is_finite()) {
        return Err(GrouError::Config(format!(
            "frequency {} must be positive",
            cfg.frequency
        )));
    }
    let freq = (cfg.frequency * NS_PER_SEC as f64).round() as i64;
    if freq <= 0 {
        return Err(GrouError::Config("frequency below one nanosecond".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| GrouError::Ingestion(format!("unreadable header: {e}")))?
        .clone();
    if header.len() < 2 {
        return Err(GrouError::Ingestion(
            "header needs a timestamp and at least one asset".into(),
        ));
    }
    let assets: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let d = assets.len();

    let mut ticks: Vec<(i64, Vec<Option<f64>>)> = Vec::new();
    let mut rows_read = 0;
    let mut bad_rows = 0;
    for rec in rdr.records() {
        rows_read += 1;
        let Ok(rec) = rec else {
            bad_rows += 1;
            continue;
        };
        if rec.len() != d + 1 {
            bad_rows += 1;
            continue;
        }
        let Some(ts) = parse_timestamp(&rec[0]) else {
            bad_rows += 1;
            continue;
        };
        let mut vals = Vec::with_capacity(d);
        let mut ok = true;
        for f in rec.iter().skip(1) {
            let f = f.trim();
            if f.is_empty() {
                vals.push(None);
                continue;
            }
            match f.parse::<f64>() {
                Ok(p) if p > 0.0 && p.is_finite() => vals.push(Some(p.ln())),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            ticks.push((ts, vals));
        } else {
            bad_rows += 1;
        }
    }
    if bad_rows > 0 {
        warn!("ingest: skipped {bad_rows} of {rows_read} rows");
    }
    ticks.sort_by_key(|t| t.0);

    let session = |day: i64| -> (i64, i64) {
        let (open, close) = if cfg.trim_open_close {
            (10 * 60 + 30, 15 * 60)
        } else {
            (9 * 60 + 30, 16 * 60)
        };
        let base = day * NS_PER_DAY;
        (base + open * 60 * NS_PER_SEC, base + close * 60 * NS_PER_SEC)
    };

    let mut current: Vec<Option<f64>> = vec![None; d];
    let mut times = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < ticks.len() {
        let day = ticks[i].0.div_euclid(NS_PER_DAY);
        let day_end = i + ticks[i..]
            .iter()
            .take_while(|t| t.0.div_euclid(NS_PER_DAY) == day)
            .count();
        let (lo, hi) = if cfg.regular_hours {
            session(day)
        } else {
            let first = ticks[i].0;
            let origin = day * NS_PER_DAY + (first - day * NS_PER_DAY).div_euclid(freq) * freq;
            let last = ticks[day_end - 1].0;
            (origin, origin + ((last - origin).div_euclid(freq) + 1) * freq)
        };
        let day_ticks: Vec<&(i64, Vec<Option<f64>>)> =
            ticks[i..day_end].iter().filter(|t| t.0 >= lo && t.0 < hi).collect();
        i = day_end;
        if day_ticks.is_empty() {
            continue;
        }
        let mut j = 0;
        let mut bin_start = lo;
        while bin_start < hi {
            let bin_end = (bin_start + freq).min(hi);
            while j < day_ticks.len() && day_ticks[j].0 < bin_end {
                for (c, v) in current.iter_mut().zip(&day_ticks[j].1) {
                    if v.is_some() {
                        *c = *v;
                    }
                }
                j += 1;
            }
            if current.iter().all(|c| c.is_some()) {
                times.push(bin_start as f64 / NS_PER_SEC as f64);
                rows.extend(current.iter().map(|c| c.unwrap()));
            }
            bin_start = bin_end;
        }
    }
    if times.is_empty() {
        return Err(GrouError::Ingestion("no usable price bins after filtering".into()));
    }
    let prices = DMatrix::from_row_slice(times.len(), d, &rows);
    Ok(IngestReport {
        prices: PriceMatrix::new(times, prices, assets)?,
        rows_read,
        bad_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("A{i}")).collect()
    }

    #[test]
    fn window_fixture() {
        let w = mrc_window(101, &MrcConfig::default()).unwrap();
        assert_eq!(
            w,
            MrcWindow {
                n_window: 10,
                k_n: 10,
                m: 92
            }
        );
        // odd N rounds up to even
        let w = mrc_window(82, &MrcConfig::default()).unwrap();
        assert_eq!((w.n_window, w.k_n, w.m), (9, 10, 73));
        assert!(matches!(
            mrc_window(2, &MrcConfig::default()),
            Err(GrouError::Window(_))
        ));
        assert!(matches!(
            mrc_window(
                4,
                &MrcConfig {
                    theta: 3.0,
                    ..Default::default()
                }
            ),
            Err(GrouError::Window(_))
        ));
        assert!(mrc_window(
            101,
            &MrcConfig {
                delta: 1.0,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn constant_prices_give_zero() {
        let p = DMatrix::from_element(60, 3, 4.2);
        assert_eq!(mrc_covariance(&p, &MrcConfig::default()).unwrap(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn hand_computed_small_case() {
        // n = 5, δ = 0.5, θ = 1: N = 2, k = 2, m = 4, Ȳ_i = (Y_{i+1} − Y_i)/2
        let y = DMatrix::from_column_slice(5, 1, &[0.0, 1.0, 3.0, 2.0, 2.0]);
        let got = mrc_covariance(&y, &MrcConfig::default()).unwrap()[(0, 0)];
        let sum = (0.25 + 1.0 + 0.25 + 0.0) as f64;
        assert!((got - sum * (4.0 / 4.0) * 6.0).abs() < 1e-14);
    }

    #[test]
    fn reference_and_optimised_are_bit_equal() {
        let mut rng = stream_rng(41, 0);
        for trial in 0..20 {
            let n = 50 + trial;
            let y = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let cfg = MrcConfig {
                delta: 0.3 + 0.02 * trial as f64,
                theta: 1.5,
                is_corr: false,
            };
            let a = mrc_reference(&y, &cfg).unwrap();
            let b = mrc_covariance(&y, &cfg).unwrap();
            for (x, z) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), z.to_bits());
            }
        }
    }

    #[test]
    fn labels_and_correlation() {
        let mut rng = stream_rng(2, 0);
        let y = DMatrix::from_fn(200, 3, |_, _| rng.sample::<f64, _>(StandardNormal)).cumsum_rows();
        let pm = PriceMatrix::new(
            (0..200).map(|i| i as f64).collect(),
            y,
            vec!["X".into(), "Y".into(), "Z".into()],
        )
        .unwrap();
        let out = mrc(
            &pm,
            &MrcConfig {
                is_corr: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.pairs, vec!["X-Y", "X-Z", "Y-Z"]);
        assert_eq!(
            out.upper,
            vec![out.matrix[(0, 1)], out.matrix[(0, 2)], out.matrix[(1, 2)]]
        );
        assert!((0..3).all(|a| out.matrix[(a, a)] == 1.0));
        assert!(out.upper.iter().all(|c| c.abs() <= 1.0));
    }

    trait CumsumRows {
        fn cumsum_rows(self) -> Self;
    }
    impl CumsumRows for DMatrix<f64> {
        fn cumsum_rows(mut self) -> Self {
            for i in 1..self.nrows() {
                for j in 0..self.ncols() {
                    self[(i, j)] += self[(i - 1, j)];
                }
            }
            self
        }
    }

    proptest! {
        #[test]
        fn bilinear_permutation_psd(seed in 0u64..500, c in 0.1f64..10.0) {
            let mut rng = stream_rng(seed, 1);
            let y = DMatrix::from_fn(80, 3, |_, _| rng.sample::<f64, _>(StandardNormal)).cumsum_rows();
            let cfg = MrcConfig::default();
            let base = mrc_covariance(&y, &cfg).unwrap();

            let mut scaled = y.clone();
            scaled.column_mut(1).scale_mut(c);
            let s = mrc_covariance(&scaled, &cfg).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    let f = if a == 1 { c } else { 1.0 } * if b == 1 { c } else { 1.0 };
                    prop_assert!((s[(a, b)] - f * base[(a, b)]).abs() <= 1e-10 * (1.0 + base[(a, b)].abs() * f));
                }
            }
            let cs = cov_to_corr(&s).unwrap();
            let cb = cov_to_corr(&base).unwrap();
            prop_assert!((cs - cb).abs().max() < 1e-10);

            let perm = [2usize, 0, 1];
            let py = DMatrix::from_fn(80, 3, |i, j| y[(i, perm[j])]);
            let p = mrc_covariance(&py, &cfg).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    prop_assert_eq!(p[(a, b)].to_bits(), base[(perm[a], perm[b])].to_bits());
                }
            }

            prop_assert_eq!(&base, &base.transpose());
            let eig = nalgebra::SymmetricEigen::new(base.clone()).eigenvalues;
            prop_assert!(eig.min() >= -1e-12 * eig.max().abs());
        }
    }

    #[test]
    fn rolling_windows_stay_within_day() {
        let mut times = Vec::new();
        for day in 0..2 {
            for s in 0..120 {
                times.push(day as f64 * 86_400.0 + 36_000.0 + 30.0 * s as f64);
            }
        }
        let mut rng = stream_rng(8, 0);
        let y = DMatrix::from_fn(times.len(), 2, |_, _| rng.sample::<f64, _>(StandardNormal)).cumsum_rows();
        let pm = PriceMatrix::new(times, y, names(2)).unwrap();
        // 60 points per half hour window, 2 windows per day
        let r = rolling_mrc(&pm, &MrcConfig::default(), 1800.0, 1800.0, 10).unwrap();
        assert_eq!(r.starts, vec![36_000.0, 37_800.0, 122_400.0, 124_200.0]);
        assert_eq!(r.pairs, vec!["A0-A1"]);
        let direct = mrc(&pm.slice(60, 60).unwrap(), &MrcConfig::default()).unwrap();
        assert_eq!(r.values[(1, 0)], direct.upper[0]);

        let overlap = rolling_mrc(&pm, &MrcConfig::default(), 1800.0, 900.0, 10).unwrap();
        assert_eq!(overlap.starts.len(), 6);
        assert!(rolling_mrc(&pm, &MrcConfig::default(), 900.0, 1800.0, 10).is_err());
        let path = r.to_path(1.0, 1).unwrap();
        assert_eq!(path.len(), 4);
        assert_eq!(path.labels, vec!["A0-A1"]);
    }

    #[test]
    fn ingest_passthrough_and_ties() {
        let csv = "timestamp,A,B\n\
            2024-01-02T10:00:00,1.0,2.0\n\
            2024-01-02T10:00:01,1.5,2.5\n\
            2024-01-02T10:00:02,2.0,3.0\n";
        let cfg = IngestConfig {
            frequency: 1.0,
            regular_hours: false,
            trim_open_close: false,
        };
        let r = ingest_reader(csv.as_bytes(), &cfg).unwrap();
        assert_eq!(r.prices.n(), 3);
        assert_eq!(r.prices.prices()[(1, 1)], 2.5f64.ln());
        let t0 = parse_timestamp("2024-01-02T10:00:00").unwrap() as f64 / 1e9;
        assert_eq!(r.prices.times(), &[t0, t0 + 1.0, t0 + 2.0]);

        let ties = "timestamp,A\n\
            2024-01-02T10:00:00.200,1.0\n\
            2024-01-02T10:00:00.900,3.0\n\
            2024-01-02T10:00:01.100,4.0\n";
        let r = ingest_reader(ties.as_bytes(), &cfg).unwrap();
        assert_eq!(r.prices.prices().column(0).as_slice(), &[3f64.ln(), 4f64.ln()]);
    }

    #[test]
    fn ingest_forward_fill_and_bad_rows() {
        let csv = "timestamp,A,B\n\
            1704189600000000000,1.0,2.0\n\
            1704189601000000000,,2.5\n\
            not-a-time,1.0,1.0\n\
            1704189604000000000,3.0,-1\n\
            1704189604000000000,3.0,3.5\n";
        let cfg = IngestConfig {
            frequency: 1.0,
            regular_hours: false,
            trim_open_close: false,
        };
        let r = ingest_reader(csv.as_bytes(), &cfg).unwrap();
        assert_eq!(r.rows_read, 5);
        assert_eq!(r.bad_rows, 2);
        let a: Vec<f64> = r.prices.prices().column(0).iter().map(|x| x.exp()).collect();
        let b: Vec<f64> = r.prices.prices().column(1).iter().map(|x| x.exp()).collect();
        let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-12);
        assert!(close(&a, &[1.0, 1.0, 1.0, 1.0, 3.0]));
        assert!(close(&b, &[2.0, 2.5, 2.5, 2.5, 3.5]));
    }

    #[test]
    fn ingest_session_filters() {
        let mut csv = String::from("timestamp,A\n");
        for (h, m) in [(9, 0), (9, 30), (10, 29), (10, 30), (14, 59), (15, 0), (16, 0)] {
            csv.push_str(&format!(
                "2024-01-02 {h:02}:{m:02}:00,{}\n",
                1.0 + h as f64 + m as f64 / 100.0
            ));
        }
        let regular = IngestConfig {
            frequency: 60.0,
            regular_hours: true,
            trim_open_close: false,
        };
        let r = ingest_reader(csv.as_bytes(), &regular).unwrap();
        assert_eq!(r.prices.n(), 390);
        let trimmed = IngestConfig {
            trim_open_close: true,
            ..regular
        };
        let r = ingest_reader(csv.as_bytes(), &trimmed).unwrap();
        assert_eq!(r.prices.n(), 270);
        assert!((r.prices.prices()[(0, 0)].exp() - 11.3).abs() < 1e-12);
        assert!((r.prices.prices()[(269, 0)].exp() - 15.59).abs() < 1e-12);
        assert!(matches!(
            ingest_reader("timestamp,A\n2024-01-02 20:00:00,1.0\n".as_bytes(), &regular),
            Err(GrouError::Ingestion(_))
        ));
    }
}
