//! Datasets: IDX / CSV / PGM readers, stratified splits, and synthetic
//! manifold samplers.
//!
//! Image sets arrive as IDX pairs (big-endian header, u8 pixels) and are
//! scaled to `[0, 1]`. A small 8x8 handwritten-digit set ships with the
//! crate; pointing `TEMB_MNIST_DIR` at a directory holding
//! `train-images-idx3-ubyte` / `train-labels-idx1-ubyte` swaps in the
//! full-size digits without code changes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::rng::{chacha_from_seed, derive_seed, uniform_f64, uniform_index, shuffle, GaussianSource};

/// Points with one small integer label per row.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub points: Array2<f64>,
    pub labels: Vec<u8>,
}

impl LabeledSet {
    pub fn new(points: Array2<f64>, labels: Vec<u8>) -> Result<Self> {
        if points.nrows() != labels.len() {
            return Err(Error::DimensionMismatch { expected: points.nrows(), got: labels.len() });
        }
        Ok(LabeledSet { points, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows of `self` at `idx`, in the given order.
    pub fn take(&self, idx: &[usize]) -> Self {
        let mut points = Array2::zeros((idx.len(), self.points.ncols()));
        let mut labels = Vec::with_capacity(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            points.row_mut(row).assign(&self.points.row(i));
            labels.push(self.labels[i]);
        }
        LabeledSet { points, labels }
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::parse(path, format!("file truncated at offset {offset}")));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().expect("slice is 4 bytes")))
}

/// Reads an IDX image file (magic 0x00000803): `n x rows x cols` u8
/// pixels, flattened row-major and scaled into `[0, 1]`.
pub fn read_idx_images(path: &Path) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != 0x0000_0803 {
        return Err(Error::parse(path, format!("bad image magic {magic:#010x}")));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let pixels = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::parse(path, "image count overflows".to_string()))?;
    let data = &bytes[16.min(bytes.len())..];
    if data.len() != pixels {
        return Err(Error::parse(
            path,
            format!("expected {pixels} pixel bytes ({n}x{rows}x{cols}), found {}", data.len()),
        ));
    }
    let mut out = Array2::zeros((n, rows * cols));
    for (v, b) in out.iter_mut().zip(data.iter()) {
        *v = *b as f64 / 255.0;
    }
    Ok(out)
}

/// Reads an IDX label file (magic 0x00000801).
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != 0x0000_0801 {
        return Err(Error::parse(path, format!("bad label magic {magic:#010x}")));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let data = &bytes[8.min(bytes.len())..];
    if data.len() != n {
        return Err(Error::parse(path, format!("expected {n} labels, found {}", data.len())));
    }
    Ok(data.to_vec())
}

/// Loads an IDX image/label pair into one labeled set.
pub fn read_idx_pair(images: &Path, labels: &Path) -> Result<LabeledSet> {
    let points = read_idx_images(images)?;
    let labels_v = read_idx_labels(labels)?;
    if points.nrows() != labels_v.len() {
        return Err(Error::parse(
            labels,
            format!("{} labels for {} images", labels_v.len(), points.nrows()),
        ));
    }
    LabeledSet::new(points, labels_v)
}

/// Directory holding the bundled 8x8 digit set.
pub fn bundled_digits_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// The desk-scale image corpus: the directory named by `TEMB_MNIST_DIR`
/// when set (expected to hold `train-images-idx3-ubyte` and
/// `train-labels-idx1-ubyte`), else the bundled 8x8 digits. Returns the
/// set and a provenance tag for reports.
pub fn load_desk_dataset() -> Result<(LabeledSet, String)> {
    if let Ok(dir) = std::env::var("TEMB_MNIST_DIR") {
        let dir = PathBuf::from(dir);
        let set = read_idx_pair(
            &dir.join("train-images-idx3-ubyte"),
            &dir.join("train-labels-idx1-ubyte"),
        )?;
        Ok((set, format!("mnist:{}", dir.display())))
    } else {
        let dir = bundled_digits_dir();
        let set = read_idx_pair(
            &dir.join("digits-images-idx3-ubyte"),
            &dir.join("digits-labels-idx1-ubyte"),
        )?;
        Ok((set, "digits-8x8".to_string()))
    }
}

/// Writes a matrix as bare CSV. Float formatting is shortest
/// round-trip, so read-back reproduces every bit.
pub fn write_csv_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in m.rows() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a bare CSV of floats; every row must have the same width and
/// parse errors name the offending cell.
pub fn read_csv_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (c, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::parse(path, format!("row {}, column {}: {cell:?} is not a number", r + 1, c + 1))
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::parse(
                    path,
                    format!("row {} has {} columns, expected {}", r + 1, row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path, "no rows".to_string()));
    }
    let ncols = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let nrows = flat.len() / ncols;
    Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| Error::parse(path, format!("shape error: {e}")))
}

/// Reads a binary (P5) PGM with maxval <= 255 into `[0, 1]` grays.
pub fn read_pgm(path: &Path) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        // Skip whitespace and '#' comment lines between header fields.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(path, "truncated header".to_string()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token(&bytes)? != "P5" {
        return Err(Error::parse(path, "not a binary PGM (want P5)".to_string()));
    }
    let width: usize = token(&bytes)?
        .parse()
        .map_err(|_| Error::parse(path, "bad width".to_string()))?;
    let height: usize = token(&bytes)?
        .parse()
        .map_err(|_| Error::parse(path, "bad height".to_string()))?;
    let maxval: usize = token(&bytes)?
        .parse()
        .map_err(|_| Error::parse(path, "bad maxval".to_string()))?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(path, format!("unsupported maxval {maxval}")));
    }
    pos += 1; // single whitespace byte after maxval
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::parse(
            path,
            format!("expected {need} pixel bytes, found {}", bytes.len().saturating_sub(pos)),
        ));
    }
    let mut out = Array2::zeros((height, width));
    for (v, b) in out.iter_mut().zip(bytes[pos..pos + need].iter()) {
        *v = *b as f64 / maxval as f64;
    }
    Ok(out)
}

/// Per-class random split into `per_class_train` + `per_class_test`
/// rows. Classes are processed in label order and each gets its own
/// derived seed, so the split is independent of input ordering quirks
/// and reproducible. A class without enough members is an error.
pub fn stratified_split(
    set: &LabeledSet,
    per_class_train: usize,
    per_class_test: usize,
    seed: u64,
) -> Result<(LabeledSet, LabeledSet)> {
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &l) in set.labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let need = per_class_train + per_class_test;
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (label, mut idx) in by_class {
        if idx.len() < need {
            return Err(Error::InvalidInput(format!(
                "class {label} has {} samples, needs {need}",
                idx.len()
            )));
        }
        let mut rng = chacha_from_seed(derive_seed(seed, "split-class", label as u64));
        shuffle(&mut rng, &mut idx);
        train_idx.extend_from_slice(&idx[..per_class_train]);
        test_idx.extend_from_slice(&idx[per_class_train..need]);
    }
    Ok((set.take(&train_idx), set.take(&test_idx)))
}

/// Synthetic manifolds for width and tube experiments. Every kind lives
/// in the first few coordinates of the ambient space with zeros beyond.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldKind {
    /// Circle of the given radius in the (1, 2) coordinate plane,
    /// shifted by `center` (padded with zeros to the ambient dimension).
    Circle { radius: f64, center: Vec<f64> },
    /// Round sphere of dimension `intrinsic_dim` in the first
    /// `intrinsic_dim + 1` coordinates.
    Sphere { radius: f64, intrinsic_dim: usize },
    /// `(t cos t, y, t sin t)` for `t` in `[1.5 pi, 4.5 pi]`, `y` in
    /// `[0, height]`.
    SwissRoll { height: f64 },
    /// Unit vectors supported on one of `n_subspaces` fixed coordinate
    /// supports of size `sparsity`.
    SparseUnion { sparsity: usize, n_subspaces: usize },
}

impl ManifoldKind {
    /// Reach, where the kind has a simple closed form.
    fn reach(&self) -> Option<f64> {
        match self {
            ManifoldKind::Circle { radius, .. } | ManifoldKind::Sphere { radius, .. } => {
                Some(*radius)
            }
            _ => None,
        }
    }
}

/// Pads `center` with zeros up to `n_dim` (an oversized center errs).
fn padded_center(center: &[f64], n_dim: usize) -> Result<Array1<f64>> {
    if center.len() > n_dim {
        return Err(Error::InvalidInput(format!(
            "center has {} coordinates, ambient dimension is {n_dim}",
            center.len()
        )));
    }
    let mut out = Array1::zeros(n_dim);
    for (i, v) in center.iter().enumerate() {
        out[i] = *v;
    }
    Ok(out)
}

/// Samples `n` points from the manifold, each displaced by uniform ball
/// noise of radius `delta` (zero keeps samples exactly on the model).
/// Noise at or past the reach of a circle or sphere would fold the tube
/// onto itself, so that is rejected.
pub fn sample_manifold(
    kind: &ManifoldKind,
    n: usize,
    n_dim: usize,
    delta: f64,
    seed: u64,
) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidInput(format!("noise radius must be >= 0, got {delta}")));
    }
    if let Some(reach) = kind.reach() {
        if delta >= reach {
            return Err(Error::InvalidInput(format!(
                "noise radius {delta} reaches the model's reach {reach}; tube folds"
            )));
        }
    }
    let mut out = Array2::zeros((n, n_dim));
    match kind {
        ManifoldKind::Circle { radius, center } => {
            if n_dim < 2 {
                return Err(Error::InvalidInput("circle needs ambient dimension >= 2".into()));
            }
            if !(*radius > 0.0) {
                return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
            }
            let c = padded_center(center, n_dim)?;
            let mut rng = chacha_from_seed(derive_seed(seed, "circle", 0));
            for mut row in out.rows_mut() {
                let theta = std::f64::consts::TAU * uniform_f64(&mut rng);
                row.assign(&c);
                row[0] += radius * libm::cos(theta);
                row[1] += radius * libm::sin(theta);
            }
        }
        ManifoldKind::Sphere { radius, intrinsic_dim } => {
            let d = *intrinsic_dim;
            if d == 0 {
                return Err(Error::InvalidInput("sphere dimension must be >= 1".into()));
            }
            if n_dim < d + 1 {
                return Err(Error::InvalidInput(format!(
                    "sphere of dimension {d} needs ambient dimension >= {}",
                    d + 1
                )));
            }
            if !(*radius > 0.0) {
                return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
            }
            let mut src = GaussianSource::new(derive_seed(seed, "sphere", 0));
            let mut g = vec![0.0f64; d + 1];
            for mut row in out.rows_mut() {
                loop {
                    src.fill(&mut g);
                    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        for (k, v) in g.iter().enumerate() {
                            row[k] = radius * v / norm;
                        }
                        break;
                    }
                }
            }
        }
        ManifoldKind::SwissRoll { height } => {
            if n_dim < 3 {
                return Err(Error::InvalidInput("swiss roll needs ambient dimension >= 3".into()));
            }
            if !(*height > 0.0) {
                return Err(Error::InvalidInput(format!("height must be positive, got {height}")));
            }
            let mut rng = chacha_from_seed(derive_seed(seed, "swiss-roll", 0));
            let (t_lo, t_hi) = (1.5 * std::f64::consts::PI, 4.5 * std::f64::consts::PI);
            for mut row in out.rows_mut() {
                let t = t_lo + (t_hi - t_lo) * uniform_f64(&mut rng);
                let y = height * uniform_f64(&mut rng);
                row[0] = t * libm::cos(t);
                row[1] = y;
                row[2] = t * libm::sin(t);
            }
        }
        ManifoldKind::SparseUnion { sparsity, n_subspaces } => {
            let s = *sparsity;
            if s == 0 || s > n_dim {
                return Err(Error::InvalidInput(format!(
                    "sparsity {s} must lie in 1..={n_dim}"
                )));
            }
            if *n_subspaces == 0 {
                return Err(Error::InvalidInput("need at least one subspace".into()));
            }
            // Fixed support per subspace, derived from the seed so the
            // union is the same across calls.
            let supports: Vec<Vec<usize>> = (0..*n_subspaces)
                .map(|j| {
                    let mut rng = chacha_from_seed(derive_seed(seed, "support", j as u64));
                    let mut all: Vec<usize> = (0..n_dim).collect();
                    shuffle(&mut rng, &mut all);
                    all.truncate(s);
                    all.sort_unstable();
                    all
                })
                .collect();
            let mut pick = chacha_from_seed(derive_seed(seed, "sparse-pick", 0));
            let mut src = GaussianSource::new(derive_seed(seed, "sparse-coef", 0));
            let mut coef = vec![0.0f64; s];
            for mut row in out.rows_mut() {
                let j = uniform_index(&mut pick, supports.len());
                loop {
                    src.fill(&mut coef);
                    let norm = coef.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        for (slot, &k) in supports[j].iter().enumerate() {
                            row[k] = coef[slot] / norm;
                        }
                        break;
                    }
                }
            }
        }
    }
    if delta > 0.0 {
        // Uniform ball noise: direction from a normalized Gaussian,
        // radius delta * u^{1/N}.
        let mut src = GaussianSource::new(derive_seed(seed, "noise", 0));
        let mut dir = vec![0.0f64; n_dim];
        for mut row in out.rows_mut() {
            loop {
                src.fill(&mut dir);
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    let u = uniform_f64(src.rng());
                    let rad = delta * libm::pow(u, 1.0 / n_dim as f64);
                    for (k, v) in dir.iter().enumerate() {
                        row[k] += rad * v / norm;
                    }
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// Exact distance from `u` to a circle of `radius` around `center`
/// (padded with zeros) in the (1, 2) coordinate plane.
pub fn circle_distance(u: ndarray::ArrayView1<f64>, radius: f64, center: &[f64]) -> Result<f64> {
    let c = padded_center(center, u.len())?;
    if u.len() < 2 {
        return Err(Error::InvalidInput("circle needs dimension >= 2".into()));
    }
    let d = &u - &c;
    let in_plane = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let off_plane: f64 = d.iter().skip(2).map(|v| v * v).sum();
    Ok(((in_plane - radius) * (in_plane - radius) + off_plane).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    fn tmp(name: &str, bytes: &[u8]) -> PathBuf {
        let dir = std::env::temp_dir().join("temb-data-tests");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(bytes).unwrap();
        path
    }

    #[test]
    fn bundled_digits_load_and_split() {
        let (set, tag) = match std::env::var("TEMB_MNIST_DIR") {
            // The suite must also pass when an override is present.
            Ok(_) => load_desk_dataset().unwrap(),
            Err(_) => {
                let (s, t) = load_desk_dataset().unwrap();
                assert_eq!(t, "digits-8x8");
                assert_eq!(s.points.ncols(), 64);
                assert!(s.len() >= 1200, "bundled set has {} rows", s.len());
                (s, t)
            }
        };
        assert!(!tag.is_empty());
        assert!(set.points.iter().all(|v| (0.0..=1.0).contains(v)));
        let (train, test) = stratified_split(&set, 100, 20, 1).unwrap();
        assert_eq!(train.len(), 1000);
        assert_eq!(test.len(), 200);
        // Per-class counts are exact.
        for l in 0..10u8 {
            assert_eq!(train.labels.iter().filter(|&&x| x == l).count(), 100);
            assert_eq!(test.labels.iter().filter(|&&x| x == l).count(), 20);
        }
        // Same seed, same split; different seed, different split.
        let (train2, _) = stratified_split(&set, 100, 20, 1).unwrap();
        assert_eq!(train.points, train2.points);
        let (train3, _) = stratified_split(&set, 100, 20, 2).unwrap();
        assert_ne!(train.points, train3.points);
    }

    #[test]
    fn split_rejects_small_classes() {
        let set = LabeledSet::new(
            Array2::zeros((4, 2)),
            vec![0, 0, 0, 1],
        )
        .unwrap();
        match stratified_split(&set, 2, 1, 0) {
            Err(Error::InvalidInput(msg)) => assert!(msg.contains("class 1"), "{msg}"),
            other => panic!("expected class-size error, got {other:?}"),
        }
    }

    #[test]
    fn idx_errors_name_the_problem() {
        let p = tmp("bad-magic", &[0, 0, 8, 9, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1]);
        match read_idx_images(&p) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("magic")),
            other => panic!("expected parse error, got {other:?}"),
        }
        let p = tmp("short-labels", &[0, 0, 8, 1, 0, 0, 0, 5, 1, 2]);
        match read_idx_labels(&p) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("expected 5")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let m = array![
            [1.0, -0.5, 3.141592653589793],
            [1e-300, 2.2250738585072014e-308, 0.1 + 0.2],
        ];
        let p = std::env::temp_dir().join("temb-data-tests/roundtrip.csv");
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        write_csv_matrix(&p, &m).unwrap();
        let back = read_csv_matrix(&p).unwrap();
        assert_eq!(m.shape(), back.shape());
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_errors_locate_the_cell() {
        let p = tmp("bad-cell.csv", b"1.0,2.0\n3.0,oops\n");
        match read_csv_matrix(&p) {
            Err(Error::Parse { message, .. }) => {
                assert!(message.contains("row 2"), "{message}");
                assert!(message.contains("column 2"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let p = tmp("ragged.csv", b"1.0,2.0\n3.0\n");
        match read_csv_matrix(&p) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("row 2")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn pgm_reads_pixels_and_comments() {
        let p = tmp("ok.pgm", b"P5 # comment\n2 3\n255\n\x00\x7f\xff\x01\x02\x03");
        let img = read_pgm(&p).unwrap();
        assert_eq!(img.shape(), &[3, 2]);
        assert_eq!(img[[0, 0]], 0.0);
        assert_eq!(img[[1, 0]], 1.0);
        assert!((img[[0, 1]] - 127.0 / 255.0).abs() < 1e-15);
        let p = tmp("bad.pgm", b"P2 2 2 255 0 0 0 0");
        assert!(read_pgm(&p).is_err());
    }

    #[test]
    fn clean_samples_satisfy_model_equations() {
        let kind = ManifoldKind::Circle { radius: 2.0, center: vec![1.0, -1.0] };
        let pts = sample_manifold(&kind, 50, 5, 0.0, 3).unwrap();
        for row in pts.rows() {
            let dx = row[0] - 1.0;
            let dy = row[1] + 1.0;
            assert!(((dx * dx + dy * dy).sqrt() - 2.0).abs() < 1e-12);
            assert!(row.iter().skip(2).all(|v| *v == 0.0));
        }
        let kind = ManifoldKind::Sphere { radius: 1.5, intrinsic_dim: 2 };
        let pts = sample_manifold(&kind, 50, 4, 0.0, 3).unwrap();
        for row in pts.rows() {
            let n = row.iter().take(3).map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.5).abs() < 1e-12);
            assert_eq!(row[3], 0.0);
        }
        let kind = ManifoldKind::SwissRoll { height: 2.0 };
        let pts = sample_manifold(&kind, 50, 3, 0.0, 3).unwrap();
        for row in pts.rows() {
            let t = (row[0] * row[0] + row[2] * row[2]).sqrt();
            assert!(t >= 1.5 * std::f64::consts::PI - 1e-9);
            assert!(t <= 4.5 * std::f64::consts::PI + 1e-9);
            assert!((0.0..=2.0).contains(&row[1]));
        }
        let kind = ManifoldKind::SparseUnion { sparsity: 3, n_subspaces: 4 };
        let pts = sample_manifold(&kind, 50, 10, 0.0, 3).unwrap();
        for row in pts.rows() {
            let nnz = row.iter().filter(|v| **v != 0.0).count();
            assert!(nnz <= 3);
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_stays_inside_delta_ball() {
        let kind = ManifoldKind::Circle { radius: 1.0, center: vec![] };
        let delta = 0.1;
        let pts = sample_manifold(&kind, 200, 6, delta, 9).unwrap();
        for row in pts.rows() {
            let d = circle_distance(row.view(), 1.0, &[]).unwrap();
            assert!(d <= delta + 1e-12, "noise escaped: {d}");
        }
        // Folding noise is rejected.
        assert!(sample_manifold(&kind, 10, 6, 1.0, 9).is_err());
    }

    #[test]
    fn circle_distance_closed_form() {
        let u = array![3.0, 0.0, 4.0];
        // In-plane distance 2 from the unit circle, off-plane 4.
        let d = circle_distance(u.view(), 1.0, &[]).unwrap();
        assert!((d - 20.0f64.sqrt()).abs() < 1e-12);
        let on = array![0.0, 1.0];
        assert!(circle_distance(on.view(), 1.0, &[]).unwrap() < 1e-15);
    }

    #[test]
    fn sampling_is_reproducible() {
        let kind = ManifoldKind::SwissRoll { height: 1.0 };
        let a = sample_manifold(&kind, 20, 3, 0.05, 11).unwrap();
        let b = sample_manifold(&kind, 20, 3, 0.05, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_manifold(&kind, 20, 3, 0.05, 12).unwrap();
        assert_ne!(a, c);
    }
}
