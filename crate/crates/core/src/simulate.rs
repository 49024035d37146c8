//! Sampling designs for the two asymptotic regimes and exact simulation of
//! zero-mean Gaussian vectors.
//!
//! # Seeding contract
//!
//! Every random stream is a pure function of a [`SeedSpec`]:
//!
//! * `stream_seed = splitmix64(master_seed + splitmix64(replicate_index))`
//!   (wrapping addition), see [`SeedSpec::stream_seed`];
//! * the generator is `ChaCha8Rng::seed_from_u64(stream_seed)` with its
//!   stream id set to the purpose ([`STREAM_DESIGN`] or [`STREAM_SAMPLE`]);
//! * uniforms are `rng.random::<f64>()` (53-bit, `[0, 1)`), normals come
//!   from the Marsaglia polar method, pairs consumed in order.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gausslin::CholFactor;

/// ChaCha stream id used for design generation.
pub const STREAM_DESIGN: u64 = 0;
/// ChaCha stream id used for observation sampling.
pub const STREAM_SAMPLE: u64 = 1;

/// Compact box `D = Π [lower_k, upper_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn unit(d: usize) -> Self {
        Self {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::config(
                "domain_box",
                format!("lower/upper must have equal nonzero length, got {} and {}", self.lower.len(), self.upper.len()),
            ));
        }
        for (k, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config("domain_box", format!("coordinate {k}: need lower < upper, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (lo, hi))| lo <= x && x <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "regime")]
pub enum Regime {
    IncreasingDomain { delta: f64 },
    FixedDomain { domain_box: DomainBox },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedMode {
    Uniform,
    Grid,
}

/// Ordered set of `n` points in `R^d`, `d ∈ {1, 2, 3}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    coords: Vec<f64>,
    d: usize,
    regime: Option<Regime>,
}

impl Design {
    /// Builds a design from explicit points. `regime` is `None` for designs
    /// that do not come from a generator (e.g. read from disk).
    pub fn new(points: Vec<Vec<f64>>, regime: Option<Regime>) -> Result<Self> {
        let d = points.first().map_or(1, Vec::len);
        check_dim(d)?;
        let mut coords = Vec::with_capacity(points.len() * d);
        for p in &points {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain("design coordinates must be finite".into()));
            }
            coords.extend_from_slice(p);
        }
        Ok(Self { coords, d, regime })
    }

    /// One-dimensional design from scalar locations.
    pub fn from_1d(xs: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| vec![x]).collect(), None)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn regime(&self) -> Option<&Regime> {
        self.regime.as_ref()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.d)
    }

    /// First `n` points, keeping the regime tag.
    pub fn prefix(&self, n: usize) -> Design {
        Design {
            coords: self.coords[..n.min(self.len()) * self.d].to_vec(),
            d: self.d,
            regime: self.regime.clone(),
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(self.point(i), self.point(j))
    }

    /// Full `n×n` row-major matrix of pairwise distances.
    pub(crate) fn distance_matrix(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let r = self.distance(i, j);
                out[i * n + j] = r;
                out[j * n + i] = r;
            }
        }
        out
    }

    /// Errors on the first pair of coinciding points.
    pub fn check_distinct(&self) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            for j in 0..i {
                if self.point(i) == self.point(j) {
                    return Err(Error::DuplicatePoint { first: j, second: i });
                }
            }
        }
        Ok(())
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=self.d).map(|k| format!("x{k}")).collect();
        w.write_record(&header)?;
        for p in self.points() {
            w.write_record(p.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let d = header.len();
        check_dim(d)?;
        for (k, name) in header.iter().enumerate() {
            if name.trim() != format!("x{}", k + 1) {
                return Err(Error::Domain(format!("design CSV header must be x1[,x2[,x3]], got {:?}", header)));
            }
        }
        let mut points = Vec::new();
        for row in r.records() {
            let row = row?;
            let p = row
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Domain(format!("bad coordinate {f:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            points.push(p);
        }
        if points.is_empty() {
            return Err(Error::EmptyInput("design CSV has no rows"));
        }
        Design::new(points, None)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn check_dim(d: usize) -> Result<()> {
    if (1..=3).contains(&d) {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("dimension {d} (only 1, 2, 3)")))
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 {
        return (a[0] - b[0]).abs();
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Identifies one independent random stream family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replicate_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replicate_index: u64) -> Self {
        Self {
            master_seed,
            replicate_index,
        }
    }

    pub fn stream_seed(&self) -> u64 {
        splitmix64(self.master_seed.wrapping_add(splitmix64(self.replicate_index)))
    }

    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.stream_seed());
        rng.set_stream(stream);
        rng
    }
}

/// SplitMix64 finalizer (Steele, Lea & Flood).
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal variates by the Marsaglia polar method.
pub struct NormalStream<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> NormalStream<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.rng.random::<f64>() - 1.0;
            let v = 2.0 * self.rng.random::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn fill(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_normal()).collect()
    }
}

/// Smallest `m` with `m^d >= n`.
fn grid_side(n: usize, d: usize) -> usize {
    let mut m = (n as f64).powf(1.0 / d as f64).round().max(1.0) as usize;
    while m.pow(d as u32) < n {
        m += 1;
    }
    while m > 1 && (m - 1).pow(d as u32) >= n {
        m -= 1;
    }
    m
}

/// Lexicographic grid multi-index of point `i` on an `m^d` grid (last
/// coordinate fastest).
fn grid_index(mut i: usize, m: usize, d: usize) -> [usize; 3] {
    let mut idx = [0; 3];
    for k in (0..d).rev() {
        idx[k] = i % m;
        i /= m;
    }
    idx
}

/// Perturbed regular grid with minimum separation `delta`.
///
/// The grid spacing is `delta / (1 - 2 perturb)` and every coordinate is
/// shifted by `Uniform(-perturb·spacing, perturb·spacing)`, so neighbours stay
/// at least `delta` apart. In `d = 1` the designs are nested in `n`.
pub fn gen_increasing(n: usize, d: usize, delta: f64, perturb: f64, seed: SeedSpec) -> Result<Design> {
    check_dim(d)?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    if !(0.0..=0.4).contains(&perturb) {
        return Err(Error::Domain(format!("perturb must lie in [0, 0.4], got {perturb}")));
    }
    let spacing = delta / (1.0 - 2.0 * perturb);
    let half_width = perturb * spacing;
    let m = grid_side(n, d);
    let mut rng = seed.rng(STREAM_DESIGN);
    let mut coords = Vec::with_capacity(n * d);
    for i in 0..n {
        let idx = grid_index(i, m, d);
        for &k in idx.iter().take(d) {
            let u: f64 = rng.random();
            coords.push(k as f64 * spacing + (2.0 * u - 1.0) * half_width);
        }
    }
    Ok(Design {
        coords,
        d,
        regime: Some(Regime::IncreasingDomain { delta }),
    })
}

/// Points in a fixed compact box: i.i.d. uniform (nested in `n`) or a
/// regular grid including the box corners.
pub fn gen_fixed(n: usize, d: usize, domain_box: &DomainBox, mode: FixedMode, seed: SeedSpec) -> Result<Design> {
    check_dim(d)?;
    domain_box.validate()?;
    if domain_box.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: domain_box.dim(),
        });
    }
    let mut coords = Vec::with_capacity(n * d);
    match mode {
        FixedMode::Uniform => {
            let mut rng = seed.rng(STREAM_DESIGN);
            for _ in 0..n {
                for k in 0..d {
                    let u: f64 = rng.random();
                    let (lo, hi) = (domain_box.lower[k], domain_box.upper[k]);
                    coords.push(lo + u * (hi - lo));
                }
            }
        }
        FixedMode::Grid => {
            let m = grid_side(n, d);
            for i in 0..n {
                let idx = grid_index(i, m, d);
                for (k, &j) in idx.iter().enumerate().take(d) {
                    let (lo, hi) = (domain_box.lower[k], domain_box.upper[k]);
                    let t = if m == 1 { 0.0 } else { j as f64 / (m - 1) as f64 };
                    coords.push(lo + t * (hi - lo));
                }
            }
        }
    }
    Ok(Design {
        coords,
        d,
        regime: Some(Regime::FixedDomain {
            domain_box: domain_box.clone(),
        }),
    })
}

/// Minimum pairwise distance. One-dimensional designs are sorted first;
/// higher dimensions use the pairwise scan.
pub fn min_separation(design: &Design) -> Result<f64> {
    let n = design.len();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    if design.dim() == 1 {
        let mut xs: Vec<f64> = design.coords.clone();
        xs.sort_by(f64::total_cmp);
        return Ok(xs.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min));
    }
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in 0..i {
            best = best.min(design.distance(i, j));
        }
    }
    Ok(best)
}

/// Draws `y = L z`, `z` standard normal from the seeded sample stream.
pub fn sample_gp(factor: &CholFactor, seed: SeedSpec) -> Vec<f64> {
    let mut normals = NormalStream::new(seed.rng(STREAM_SAMPLE));
    let z = normals.fill(factor.n());
    factor.lower_mul(&z)
}
