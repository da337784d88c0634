//! Seeded Gaussian projections and distortion audits.
//!
//! An [`EmbeddingMap`] is a dense `m x N` Gaussian matrix with scale
//! `1/sqrt(m)`, regenerated bit-for-bit from `(m, N, seed)`. The audit
//! functions measure how far the map is from an isometry on a finite set:
//! squared-distance distortion on the vectors themselves
//! ([`map_distortion`]), on pairwise differences ([`embedding_distortion`]),
//! on inner products ([`inner_product_distortion`]), and over the convex
//! hull of a symmetric set of directions ([`convex_hull_distortion`]).
//! [`unit_secants`] builds the normalized difference set those audits run
//! on.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{uniform_f64, uniform_index, GaussianSource};

/// File magic for serialized maps.
const MAGIC: &[u8; 4] = b"TEMB";
const FORMAT_VERSION: u32 = 1;

/// Dense random projection `x -> scale * (entries @ x)`.
#[derive(Debug, Clone)]
pub struct EmbeddingMap {
    /// Unscaled Gaussian entries, `m x N`, row-major generation order.
    entries: Array2<f64>,
    /// `1 / sqrt(m)`, applied on every evaluation.
    scale: f64,
    seed: u64,
}

impl EmbeddingMap {
    /// Draws an `m x N` map with i.i.d. standard-normal entries from the
    /// seeded stream, filled in row-major order.
    pub fn gaussian(m: usize, n_ambient: usize, seed: u64) -> Result<Self> {
        if m == 0 || n_ambient == 0 {
            return Err(Error::InvalidInput(format!(
                "embedding map needs positive dimensions, got {m} x {n_ambient}"
            )));
        }
        let mut src = GaussianSource::new(seed);
        let mut entries = Vec::with_capacity(m * n_ambient);
        for _ in 0..m * n_ambient {
            entries.push(src.next());
        }
        let entries = Array2::from_shape_vec((m, n_ambient), entries)
            .expect("shape matches entry count");
        Ok(EmbeddingMap { entries, scale: 1.0 / (m as f64).sqrt(), seed })
    }

    /// Output dimension `m`.
    pub fn output_dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Ambient (input) dimension `N`.
    pub fn ambient_dim(&self) -> usize {
        self.entries.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Applies the scaled map to one vector.
    pub fn apply(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                got: x.len(),
            });
        }
        let mut y = self.entries.dot(&x);
        y.mapv_inplace(|v| v * self.scale);
        Ok(y)
    }

    /// Applies the map to every row of `points`, returning a `k x m`
    /// matrix. Rows go through the same code path as [`Self::apply`] so
    /// the two always agree bit-for-bit.
    pub fn apply_rows(&self, points: &Array2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((points.nrows(), self.output_dim()));
        for (i, row) in points.rows().into_iter().enumerate() {
            out.row_mut(i).assign(&self.apply(row)?);
        }
        Ok(out)
    }

    /// Writes the map in the `TEMB` binary layout: magic, u32 version,
    /// u64 seed, u32 m, u32 N (all little-endian), then `m * N` f64
    /// entries row-major.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u64::<LittleEndian>(self.seed)?;
        w.write_u32::<LittleEndian>(self.output_dim() as u32)?;
        w.write_u32::<LittleEndian>(self.ambient_dim() as u32)?;
        for &v in self.entries.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
        Ok(())
    }

    /// Reads the `TEMB` layout written by [`Self::write_binary`]. Errors
    /// name the byte offset of the first inconsistency.
    pub fn read_binary<R: Read>(r: &mut R, origin: &str) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| Error::parse(origin, format!("at offset 0: {e}")))?;
        if &magic != MAGIC {
            return Err(Error::parse(
                origin,
                format!("at offset 0: bad magic {magic:02x?}, want {MAGIC:02x?}"),
            ));
        }
        let version = r
            .read_u32::<LittleEndian>()
            .map_err(|e| Error::parse(origin, format!("at offset 4: {e}")))?;
        if version != FORMAT_VERSION {
            return Err(Error::parse(
                origin,
                format!("at offset 4: unsupported version {version}"),
            ));
        }
        let seed = r
            .read_u64::<LittleEndian>()
            .map_err(|e| Error::parse(origin, format!("at offset 8: {e}")))?;
        let m = r
            .read_u32::<LittleEndian>()
            .map_err(|e| Error::parse(origin, format!("at offset 16: {e}")))? as usize;
        let n = r
            .read_u32::<LittleEndian>()
            .map_err(|e| Error::parse(origin, format!("at offset 20: {e}")))? as usize;
        if m == 0 || n == 0 {
            return Err(Error::parse(origin, format!("degenerate shape {m} x {n}")));
        }
        let mut entries = Vec::with_capacity(m * n);
        for i in 0..m * n {
            let v = r.read_f64::<LittleEndian>().map_err(|e| {
                Error::parse(origin, format!("at offset {}: {e}", 24 + 8 * i))
            })?;
            entries.push(v);
        }
        let entries =
            Array2::from_shape_vec((m, n), entries).expect("shape matches entry count");
        Ok(EmbeddingMap { entries, scale: 1.0 / (m as f64).sqrt(), seed })
    }

    pub fn save(&self, path: &str) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_binary(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &str) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_binary(&mut BufReader::new(f), path)
    }
}

/// Which input achieved the extreme value in a distortion audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Witness {
    /// Index of a single audited vector.
    Single(usize),
    /// Index pair of an audited difference.
    Pair(usize, usize),
}

/// Result of a distortion audit over a finite family.
#[derive(Debug, Clone, Serialize)]
pub struct DistortionReport {
    /// Largest `|Пx| / |x|` seen.
    pub max_ratio: f64,
    /// Smallest `|Пx| / |x|` seen.
    pub min_ratio: f64,
    /// Largest `| |Пx|^2 - |x|^2 | / |x|^2`.
    pub max_sq_distortion: f64,
    /// Where the max squared distortion occurred.
    pub witness: Witness,
    /// Number of vectors (or pairs) audited.
    pub count: usize,
}

/// Norm of a vector view.
fn norm(x: ArrayView1<f64>) -> f64 {
    x.dot(&x).sqrt()
}

/// Accumulates distortion stats over `(index-key, vector)` items in
/// parallel. Ties in the argmax break toward the smaller witness so the
/// result does not depend on scheduling.
fn audit<I>(map: &EmbeddingMap, items: I) -> Result<DistortionReport>
where
    I: IntoParallelIterator<Item = (Witness, Array1<f64>)>,
{
    struct Acc {
        max_ratio: f64,
        min_ratio: f64,
        max_sq: f64,
        witness: Witness,
        count: usize,
    }
    let empty = || Acc {
        max_ratio: f64::NEG_INFINITY,
        min_ratio: f64::INFINITY,
        max_sq: f64::NEG_INFINITY,
        witness: Witness::Single(usize::MAX),
        count: 0,
    };
    fn witness_rank(w: Witness) -> (usize, usize) {
        match w {
            Witness::Single(i) => (i, 0),
            Witness::Pair(i, j) => (i, j + 1),
        }
    }
    let merged = items
        .into_par_iter()
        .map(|(w, x)| {
            let nx = norm(x.view());
            let px = map.apply(x.view()).expect("dimensions checked by caller");
            let np = norm(px.view());
            let sq = (np * np - nx * nx).abs() / (nx * nx);
            (w, np / nx, sq)
        })
        .fold(empty, |mut acc, (w, ratio, sq)| {
            acc.max_ratio = acc.max_ratio.max(ratio);
            acc.min_ratio = acc.min_ratio.min(ratio);
            if sq > acc.max_sq || (sq == acc.max_sq && witness_rank(w) < witness_rank(acc.witness))
            {
                acc.max_sq = sq;
                acc.witness = w;
            }
            acc.count += 1;
            acc
        })
        .reduce(empty, |mut a, b| {
            a.max_ratio = a.max_ratio.max(b.max_ratio);
            a.min_ratio = a.min_ratio.min(b.min_ratio);
            if b.max_sq > a.max_sq
                || (b.max_sq == a.max_sq && witness_rank(b.witness) < witness_rank(a.witness))
            {
                a.max_sq = b.max_sq;
                a.witness = b.witness;
            }
            a.count += b.count;
            a
        });
    if merged.count == 0 {
        return Err(Error::InvalidInput("distortion audit over empty family".into()));
    }
    Ok(DistortionReport {
        max_ratio: merged.max_ratio,
        min_ratio: merged.min_ratio,
        max_sq_distortion: merged.max_sq,
        witness: merged.witness,
        count: merged.count,
    })
}

/// Squared-distance distortion of the map on each vector of `vectors`
/// (rows). Every row must be nonzero.
pub fn map_distortion(map: &EmbeddingMap, vectors: &Array2<f64>) -> Result<DistortionReport> {
    check_width(map, vectors)?;
    for (i, row) in vectors.rows().into_iter().enumerate() {
        if norm(row) == 0.0 {
            return Err(Error::InvalidInput(format!("vector {i} is zero")));
        }
    }
    let items: Vec<(Witness, Array1<f64>)> = vectors
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| (Witness::Single(i), r.to_owned()))
        .collect();
    audit(map, items)
}

/// Squared-distance distortion over all pairwise differences of the rows
/// of `points`. Coincident pairs are skipped; at least two distinct rows
/// are required.
pub fn embedding_distortion(map: &EmbeddingMap, points: &Array2<f64>) -> Result<DistortionReport> {
    check_width(map, points)?;
    let n = points.nrows();
    let mut items = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = &points.row(i) - &points.row(j);
            if norm(d.view()) > 0.0 {
                items.push((Witness::Pair(i, j), d));
            }
        }
    }
    if items.is_empty() {
        return Err(Error::InvalidInput(
            "embedding distortion needs at least two distinct points".into(),
        ));
    }
    audit(map, items)
}

/// Worst inner-product error `|<Пx, Пy> - <x, y>| / (|x| |y|)` over all
/// row pairs of `points`, including each row with itself.
pub fn inner_product_distortion(map: &EmbeddingMap, points: &Array2<f64>) -> Result<f64> {
    check_width(map, points)?;
    let n = points.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("inner-product audit over empty set".into()));
    }
    let mut norms = Vec::with_capacity(n);
    for (i, row) in points.rows().into_iter().enumerate() {
        let nx = norm(row);
        if nx == 0.0 {
            return Err(Error::InvalidInput(format!("vector {i} is zero")));
        }
        norms.push(nx);
    }
    let mapped = map.apply_rows(points)?;
    let worst = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut local: f64 = 0.0;
            for j in i..n {
                let ip_orig = points.row(i).dot(&points.row(j));
                let ip_map = mapped.row(i).dot(&mapped.row(j));
                local = local.max((ip_map - ip_orig).abs() / (norms[i] * norms[j]));
            }
            local
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Normalized difference directions of a point set.
///
/// For every unordered pair of distinct rows the two opposite directions
/// `±(x - y)/|x - y|` enter the output, so the result is exactly closed
/// under negation. Near-duplicates are removed by quantizing coordinates
/// to `dedup_tol` (exact bit equality when `dedup_tol == 0`). A set whose
/// rows are all identical yields an empty `0 x N` result rather than an
/// error.
pub fn unit_secants(points: &Array2<f64>, dedup_tol: f64) -> Result<Array2<f64>> {
    if dedup_tol < 0.0 || !dedup_tol.is_finite() {
        return Err(Error::InvalidInput(format!("bad dedup tolerance {dedup_tol}")));
    }
    let n = points.nrows();
    let dim = points.ncols();
    if n == 0 || dim == 0 {
        return Err(Error::InvalidInput("unit_secants needs a nonempty point set".into()));
    }
    // Dedup runs on a sign-canonical representative (first nonzero
    // coordinate positive); emitting ± of each kept representative keeps
    // the output exactly symmetric.
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut kept: Vec<Array1<f64>> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = &points.row(i) - &points.row(j);
            let len = norm(d.view());
            if len == 0.0 {
                continue;
            }
            let mut s = d / len;
            let lead = s.iter().find(|v| **v != 0.0).copied().unwrap_or(0.0);
            if lead < 0.0 {
                s.mapv_inplace(|v| -v);
            }
            let key: Vec<u64> = if dedup_tol == 0.0 {
                s.iter().map(|v| v.to_bits()).collect()
            } else {
                s.iter().map(|v| ((v / dedup_tol).round() as i64) as u64).collect()
            };
            if seen.insert(key) {
                kept.push(s);
            }
        }
    }
    let mut out = Array2::zeros((2 * kept.len(), dim));
    for (r, s) in kept.iter().enumerate() {
        out.row_mut(2 * r).assign(s);
        out.row_mut(2 * r + 1).assign(&s.mapv(|v| -v));
    }
    Ok(out)
}

/// Estimated worst norm error `| |Пx| - |x| |` over the convex hull of
/// `secants ∪ -secants`.
///
/// Evaluates every vertex exactly, then `n_samples` random convex
/// combinations: a subset of at most `min(k, N+1)` vertices with flat
/// Dirichlet weights (enough points to reach any hull element). The
/// result is a lower bound on the true supremum and is reported as an
/// estimate, never a certificate.
pub fn convex_hull_distortion(
    map: &EmbeddingMap,
    secants: &Array2<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    check_width(map, secants)?;
    let k = secants.nrows();
    if k == 0 {
        return Err(Error::InvalidInput("hull audit over empty secant set".into()));
    }
    // Vertices of the symmetric hull: ± each secant. |П(-s)| = |Пs|, so
    // auditing one sign covers both.
    let vertex_worst = secants
        .rows()
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|s| {
            let ns = norm(s);
            let np = norm(map.apply(s).expect("dimensions checked").view());
            (np - ns).abs()
        })
        .reduce(|| 0.0, f64::max);

    let max_support = (map.ambient_dim() + 1).min(2 * k);
    let sample_worst = (0..n_samples)
        .into_par_iter()
        .map(|t| {
            let mut src = GaussianSource::new(crate::rng::derive_seed(seed, "hull-sample", t as u64));
            let rng = src.rng();
            let support = 1 + uniform_index(rng, max_support);
            // Distinct vertex ids out of 2k (id >= k means negated row id - k).
            let mut ids = HashSet::with_capacity(support);
            while ids.len() < support {
                ids.insert(uniform_index(rng, 2 * k));
            }
            let mut ids: Vec<usize> = ids.into_iter().collect();
            ids.sort_unstable();
            // Flat Dirichlet weights via normalized exponentials.
            let mut weights = Vec::with_capacity(support);
            let mut total = 0.0;
            for _ in 0..support {
                let e = -libm::log(1.0 - uniform_f64(rng));
                weights.push(e);
                total += e;
            }
            let mut x = Array1::zeros(map.ambient_dim());
            for (&id, &w) in ids.iter().zip(&weights) {
                let sign = if id < k { 1.0 } else { -1.0 };
                let row = secants.row(id % k);
                x.scaled_add(sign * w / total, &row);
            }
            let nx = norm(x.view());
            let np = norm(map.apply(x.view()).expect("dimensions checked").view());
            (np - nx).abs()
        })
        .reduce(|| 0.0, f64::max);

    Ok(vertex_worst.max(sample_worst))
}

fn check_width(map: &EmbeddingMap, points: &Array2<f64>) -> Result<()> {
    if points.ncols() != map.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: map.ambient_dim(),
            got: points.ncols(),
        });
    }
    Ok(())
}
