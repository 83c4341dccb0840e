use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::math::RngStream;

/// Labelled samples with features in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::invalid_arg(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid_arg(format!("label {bad} outside 0..{num_classes}")));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// The first `n` samples (all of them if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            features: self.features.slice(ndarray::s![..n, ..]).to_owned(),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
        }
    }

    /// Samples at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(format!("{what}: header truncated at byte {}", bytes.len())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads an IDX image file (magic `0x00000803`) and its IDX label file
/// (magic `0x00000801`). Pixels are scaled by `1/256` into `[0, 1)`.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = read_bytes(images)?;
    let lab = read_bytes(labels)?;
    let iname = images.display().to_string();
    let lname = labels.display().to_string();

    let magic = be_u32(&img, 0, &iname)?;
    if magic != 0x0000_0803 {
        return Err(Error::format(format!("{iname}: bad image magic {magic:#010x}")));
    }
    let n = be_u32(&img, 4, &iname)? as usize;
    let rows = be_u32(&img, 8, &iname)? as usize;
    let cols = be_u32(&img, 12, &iname)? as usize;
    let dims = rows * cols;
    let expected = 16 + n * dims;
    if img.len() != expected {
        return Err(Error::format(format!(
            "{iname}: expected {expected} bytes for {n} images of {rows}x{cols}, found {}",
            img.len()
        )));
    }

    let magic = be_u32(&lab, 0, &lname)?;
    if magic != 0x0000_0801 {
        return Err(Error::format(format!("{lname}: bad label magic {magic:#010x}")));
    }
    let nl = be_u32(&lab, 4, &lname)? as usize;
    if lab.len() != 8 + nl {
        return Err(Error::format(format!(
            "{lname}: expected {} bytes for {nl} labels, found {}",
            8 + nl,
            lab.len()
        )));
    }
    if nl != n {
        return Err(Error::format(format!("{n} images but {nl} labels")));
    }

    let features = Array2::from_shape_vec(
        (n, dims),
        img[16..].iter().map(|&p| p as f64 / 256.0).collect(),
    )
    .expect("length checked");
    let labels: Vec<usize> = lab[8..].iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    Dataset::new(features, labels, num_classes).map_err(|e| Error::format(e.to_string()))
}

/// Per-column min-max scaling fitted on one split and applied to others.
/// Constant columns map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    pub min: Array1<f64>,
    pub max: Array1<f64>,
}

impl MinMaxScaler {
    pub fn fit(x: &Array2<f64>) -> Self {
        let min = x.fold_axis(Axis(0), f64::INFINITY, |&a, &b| a.min(b));
        let max = x.fold_axis(Axis(0), f64::NEG_INFINITY, |&a, &b| a.max(b));
        Self { min, max }
    }

    /// Scales in place and clamps into `[0, 1]`.
    pub fn apply(&self, x: &mut Array2<f64>) {
        for mut row in x.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                let range = self.max[k] - self.min[k];
                *v = if range > 0.0 {
                    ((*v - self.min[k]) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
    }
}

fn parse_csv(path: &Path, n_features: usize, n_classes: usize) -> Result<(Array2<f64>, Vec<usize>)> {
    let name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(format!("{name}: {e}")))?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let line = r + 1;
        let rec = rec.map_err(|e| Error::format(format!("{name}: row {line}: {e}")))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != n_features + 1 {
            return Err(Error::format(format!(
                "{name}: row {line} has {} fields, expected {}",
                rec.len(),
                n_features + 1
            )));
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            rec.iter().take(n_features).map(str::parse::<f64>).collect();
        let label_field = &rec[n_features];
        match parsed {
            Ok(row) => {
                let label = label_field.parse::<usize>().map_err(|_| {
                    Error::format(format!("{name}: row {line}: label '{label_field}' is not a class index"))
                })?;
                if label >= n_classes {
                    return Err(Error::format(format!(
                        "{name}: row {line}: label {label} outside 0..{n_classes}"
                    )));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::format(format!("{name}: row {line}: non-finite value")));
                }
                values.extend(row);
                labels.push(label);
            }
            // A first row that does not parse is a header.
            Err(_) if line == 1 && labels.is_empty() => continue,
            Err(e) => {
                return Err(Error::format(format!("{name}: row {line}: {e}")));
            }
        }
    }
    let x = Array2::from_shape_vec((labels.len(), n_features), values).expect("arity checked");
    Ok((x, labels))
}

/// Rows of `n_features` numbers followed by an integer label; an optional
/// header row is skipped. Features are min-max scaled with this file's own
/// column statistics.
pub fn load_csv_dataset(path: &Path, n_features: usize, n_classes: usize) -> Result<Dataset> {
    let (mut x, y) = parse_csv(path, n_features, n_classes)?;
    MinMaxScaler::fit(&x).apply(&mut x);
    Dataset::new(x, y, n_classes)
}

/// Train and test CSVs, both scaled with the training columns' min/max.
pub fn load_csv_splits(
    train: &Path,
    test: &Path,
    n_features: usize,
    n_classes: usize,
) -> Result<Splits> {
    let (mut xtr, ytr) = parse_csv(train, n_features, n_classes)?;
    let (mut xte, yte) = parse_csv(test, n_features, n_classes)?;
    let scaler = MinMaxScaler::fit(&xtr);
    scaler.apply(&mut xtr);
    scaler.apply(&mut xte);
    Ok(Splits {
        train: Dataset::new(xtr, ytr, n_classes)?,
        test: Dataset::new(xte, yte, n_classes)?,
    })
}

/// `side × side` images whose class information lives in the central
/// `side/2` window: each class owns a few Gaussian bumps at fixed positions
/// inside the window, jittered per sample. Outside the window pixels are
/// i.i.d. uniform noise in `[0, 0.02)`. Labels cycle through the classes.
pub fn synth_centered_blobs(
    n_samples: usize,
    side: usize,
    n_classes: usize,
    rng: &mut RngStream,
) -> Result<Dataset> {
    if side < 8 {
        return Err(Error::invalid_arg(format!("synthetic images need side >= 8, got {side}")));
    }
    if n_classes < 1 {
        return Err(Error::invalid_arg("need at least one class"));
    }
    const BUMPS: usize = 3;
    const BORDER_NOISE: f64 = 0.02;
    let lo = side / 4;
    let hi = lo + side / 2;
    let span = (hi - lo) as f64;
    let sigma = span / 6.0;

    let centers: Vec<Vec<(f64, f64)>> = (0..n_classes)
        .map(|_| {
            (0..BUMPS)
                .map(|_| {
                    (
                        lo as f64 + 1.0 + rng.uniform() * (span - 3.0),
                        lo as f64 + 1.0 + rng.uniform() * (span - 3.0),
                    )
                })
                .collect()
        })
        .collect();

    let mut features = Array2::zeros((n_samples, side * side));
    let mut labels = Vec::with_capacity(n_samples);
    for (s, mut img) in features.rows_mut().into_iter().enumerate() {
        let class = s % n_classes;
        labels.push(class);
        let jittered: Vec<(f64, f64, f64)> = centers[class]
            .iter()
            .map(|&(r, c)| {
                (
                    r + 0.75 * rng.normal(),
                    c + 0.75 * rng.normal(),
                    0.6 + 0.4 * rng.uniform(),
                )
            })
            .collect();
        for r in 0..side {
            for c in 0..side {
                let inside = (lo..hi).contains(&r) && (lo..hi).contains(&c);
                let v = if inside {
                    let bump: f64 = jittered
                        .iter()
                        .map(|&(br, bc, amp)| {
                            let d2 = (r as f64 - br).powi(2) + (c as f64 - bc).powi(2);
                            amp * (-d2 / (2.0 * sigma * sigma)).exp()
                        })
                        .sum();
                    (bump + 0.05 * rng.uniform()).min(1.0)
                } else {
                    BORDER_NOISE * rng.uniform()
                };
                img[r * side + c] = v;
            }
        }
    }
    Dataset::new(features, labels, n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn idx_files(n: usize, pixels: &[u8], labels: &[u8]) -> (tempfile::NamedTempFile, tempfile::NamedTempFile) {
        let mut img = tempfile::NamedTempFile::new().unwrap();
        img.write_all(&0x803u32.to_be_bytes()).unwrap();
        img.write_all(&(n as u32).to_be_bytes()).unwrap();
        img.write_all(&2u32.to_be_bytes()).unwrap();
        img.write_all(&2u32.to_be_bytes()).unwrap();
        img.write_all(pixels).unwrap();
        let mut lab = tempfile::NamedTempFile::new().unwrap();
        lab.write_all(&0x801u32.to_be_bytes()).unwrap();
        lab.write_all(&(n as u32).to_be_bytes()).unwrap();
        lab.write_all(labels).unwrap();
        (img, lab)
    }

    #[test]
    fn idx_scaling() {
        let (img, lab) = idx_files(2, &[0, 255, 128, 1, 2, 3, 4, 5], &[7, 1]);
        let d = load_mnist_idx(img.path(), lab.path()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.n_features(), 4);
        assert_eq!(d.features[[0, 1]], 0.99609375);
        assert_eq!(d.labels, vec![7, 1]);
    }

    #[test]
    fn idx_truncated_names_byte_counts() {
        let (img, lab) = idx_files(2, &[0, 255, 128, 1, 2, 3, 4], &[7, 1]);
        let err = load_mnist_idx(img.path(), lab.path()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Format(_)));
        assert!(msg.contains("expected 24") && msg.contains("found 23"), "{msg}");
    }

    #[test]
    fn idx_bad_magic() {
        let (img, lab) = idx_files(1, &[0, 0, 0, 0], &[0]);
        let err = load_mnist_idx(lab.path(), img.path()).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_with_header_and_scaling() {
        let f = csv_file("a,b,c,label\n1,5,2,0\n3,5,4,1\n2,5,3,2\n");
        let d = load_csv_dataset(f.path(), 3, 3).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.features.column(0).to_vec(), vec![0.0, 1.0, 0.5]);
        assert_eq!(d.features.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn csv_sixteen_features() {
        let row = |y: usize| format!("{},{y}\n", vec!["0.5"; 16].join(","));
        let f = csv_file(&format!("{}{}{}", row(0), row(4), row(2)));
        assert_eq!(load_csv_dataset(f.path(), 16, 5).unwrap().len(), 3);
    }

    #[test]
    fn csv_errors_carry_row() {
        let f = csv_file("1,2,0\n1,2,7\n");
        let msg = load_csv_dataset(f.path(), 2, 5).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("label 7"), "{msg}");
        let f = csv_file("1,2,0\n1,x,1\n");
        let err = load_csv_dataset(f.path(), 2, 5).unwrap_err();
        assert!(matches!(err, Error::Format(_)) && err.to_string().contains("row 2"));
        let f = csv_file("1,2,0\n1,1\n");
        assert!(load_csv_dataset(f.path(), 2, 5).unwrap_err().to_string().contains("row 2"));
    }

    #[test]
    fn csv_test_split_uses_train_stats() {
        let tr = csv_file("0,0\n10,1\n");
        let te = csv_file("5,0\n20,1\n");
        let s = load_csv_splits(tr.path(), te.path(), 1, 2).unwrap();
        assert_eq!(s.test.features.column(0).to_vec(), vec![0.5, 1.0]);
    }

    #[test]
    fn blobs_border_and_center() {
        let d = synth_centered_blobs(200, 16, 3, &mut RngStream::new(1)).unwrap();
        for row in d.features.rows() {
            let (mut border, mut nb, mut center, mut nc) = (0.0, 0, 0.0, 0);
            for r in 0..16 {
                for c in 0..16 {
                    let v = row[r * 16 + c];
                    if (4..12).contains(&r) && (4..12).contains(&c) {
                        center += v;
                        nc += 1;
                    } else {
                        border += v;
                        nb += 1;
                        assert!(v < 0.02);
                    }
                }
            }
            assert!(border / (nb as f64) < 0.02);
            assert!(center / (nc as f64) > 0.1);
        }
    }

    #[test]
    fn blobs_deterministic_and_guarded() {
        let a = synth_centered_blobs(10, 8, 2, &mut RngStream::new(3)).unwrap();
        let b = synth_centered_blobs(10, 8, 2, &mut RngStream::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(synth_centered_blobs(10, 7, 2, &mut RngStream::new(3)).is_err());
    }
}
