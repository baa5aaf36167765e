//! Datasets, CSV ingestion and the preprocessing steps applied before shift
//! injection.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lower_median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    Classification,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(Error::arg(format!("unknown task `{other}` (regression|classification)"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        })
    }
}

/// Response attached to each row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Real(Vec<f64>),
    /// Class ids in `0..n_classes`.
    Class { ids: Vec<usize>, n_classes: usize },
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Real(v) => v.len(),
            Labels::Class { ids, .. } => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Labels as reals; class ids are cast.
    pub fn as_real(&self) -> Vec<f64> {
        match self {
            Labels::Real(v) => v.clone(),
            Labels::Class { ids, .. } => ids.iter().map(|&c| c as f64).collect(),
        }
    }

    /// Labels as class ids. Real labels are accepted when every value is a
    /// non-negative integer.
    pub fn as_classes(&self) -> Result<(Vec<usize>, usize)> {
        match self {
            Labels::Class { ids, n_classes } => Ok((ids.clone(), *n_classes)),
            Labels::Real(v) => {
                let mut ids = Vec::with_capacity(v.len());
                for &y in v {
                    if y < 0.0 || y.fract() != 0.0 || y > u32::MAX as f64 {
                        return Err(Error::State(format!(
                            "label {y} is not a class id; binarize or supply class labels"
                        )));
                    }
                    ids.push(y as usize);
                }
                let n_classes = ids.iter().max().map_or(0, |m| m + 1);
                Ok((ids, n_classes))
            }
        }
    }

    /// Converts to the representation the task expects: reals for
    /// regression, class ids for classification.
    pub fn for_task(&self, task: Task) -> Result<Labels> {
        match task {
            Task::Regression => Ok(Labels::Real(self.as_real())),
            Task::Classification => {
                let (ids, n_classes) = self.as_classes()?;
                Ok(Labels::Class { ids, n_classes })
            }
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Labels::Real(_) => Task::Regression,
            Labels::Class { .. } => Task::Classification,
        }
    }

    pub fn select(&self, rows: &[usize]) -> Labels {
        match self {
            Labels::Real(v) => Labels::Real(rows.iter().map(|&i| v[i]).collect()),
            Labels::Class { ids, n_classes } => Labels::Class {
                ids: rows.iter().map(|&i| ids[i]).collect(),
                n_classes: *n_classes,
            },
        }
    }
}

/// Feature matrix with optional labels. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Option<Labels>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Option<Labels>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::invariant(format!("dataset must be non-empty, got {n}x{d}")));
        }
        if feature_names.len() != d {
            return Err(Error::dim(format!(
                "{} feature names for {d} columns",
                feature_names.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::dim(format!("{} labels for {n} rows", l.len())));
            }
            if let Labels::Real(v) = l {
                if v.iter().any(|y| !y.is_finite()) {
                    return Err(Error::invariant("non-finite label"));
                }
            }
            if let Labels::Class { ids, n_classes } = l {
                if ids.iter().any(|&c| c >= *n_classes) {
                    return Err(Error::invariant("class id out of range"));
                }
            }
        }
        if let Some(((i, j), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invariant(format!("non-finite feature at row {i}, column {j}")));
        }
        Ok(Dataset { features, labels, feature_names })
    }

    /// Unlabeled dataset with generated names `x0, x1, ...`.
    pub fn from_features(features: Array2<f64>) -> Result<Self> {
        let names = (0..features.ncols()).map(|j| format!("x{j}")).collect();
        Dataset::new(features, None, names)
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn with_labels(self, labels: Option<Labels>) -> Result<Self> {
        Dataset::new(self.features, labels, self.feature_names)
    }

    /// Rows at `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            labels: self.labels.as_ref().map(|l| l.select(rows)),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Columns at `cols`, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Dataset> {
        if cols.is_empty() || cols.iter().any(|&c| c >= self.n_features()) {
            return Err(Error::arg(format!("bad column selection {cols:?}")));
        }
        Ok(Dataset {
            features: self.features.select(Axis(1), cols),
            labels: self.labels.clone(),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
        })
    }

    pub fn into_parts(self) -> (Array2<f64>, Option<Labels>, Vec<String>) {
        (self.features, self.labels, self.feature_names)
    }
}

/// Which CSV column holds the labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Plain integers are taken as 0-based indices, anything else as a name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    label_column: Option<&LabelColumn>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    read_csv(file, has_header, label_column)
}

/// Parses a comma-separated numeric table. A numeric label column becomes real
/// labels; otherwise labels become class ids in order of first appearance.
pub fn read_csv<R: Read>(
    reader: R,
    has_header: bool,
    label_column: Option<&LabelColumn>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = rdr.records();
    let mut line = 0usize;
    let header: Option<Vec<String>> = if has_header {
        line += 1;
        match records.next() {
            None => return Err(Error::Ingest { row: 1, col: 0, msg: "empty file".into() }),
            Some(r) => {
                let r = r.map_err(|e| csv_error(e, line))?;
                Some(r.iter().map(str::to_string).collect())
            }
        }
    } else {
        None
    };

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    let mut row_lines: Vec<usize> = Vec::new();
    let mut width = header.as_ref().map(Vec::len);
    for r in records {
        line += 1;
        let r = r.map_err(|e| csv_error(e, line))?;
        if r.len() == 1 && r.get(0) == Some("") {
            continue;
        }
        match width {
            None => width = Some(r.len()),
            Some(w) if w != r.len() => {
                return Err(Error::Ingest {
                    row: line,
                    col: r.len().min(w) + 1,
                    msg: format!("expected {w} fields, found {}", r.len()),
                })
            }
            _ => {}
        }
        rows.push(r);
        row_lines.push(line);
    }
    let width = match (width, rows.is_empty()) {
        (Some(w), false) => w,
        _ => return Err(Error::Ingest { row: line.max(1), col: 0, msg: "no data rows".into() }),
    };

    let label_idx = match label_column {
        None => None,
        Some(LabelColumn::Index(i)) if *i < width => Some(*i),
        Some(LabelColumn::Index(i)) => {
            return Err(Error::arg(format!("label column {i} out of range for {width} columns")))
        }
        Some(LabelColumn::Name(name)) => {
            let h = header
                .as_ref()
                .ok_or_else(|| Error::arg("label column given by name but file has no header"))?;
            Some(
                h.iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::arg(format!("no column named {name:?}")))?,
            )
        }
    };

    let feature_cols: Vec<usize> = (0..width).filter(|&c| Some(c) != label_idx).collect();
    if feature_cols.is_empty() {
        return Err(Error::arg("no feature columns"));
    }
    let n = rows.len();
    let d = feature_cols.len();
    let mut features = Array2::<f64>::zeros((n, d));
    for (i, r) in rows.iter().enumerate() {
        for (j, &c) in feature_cols.iter().enumerate() {
            let cell = &r[c];
            let v: f64 = cell.parse().map_err(|_| Error::Ingest {
                row: row_lines[i],
                col: c + 1,
                msg: format!("non-numeric feature value {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingest {
                    row: row_lines[i],
                    col: c + 1,
                    msg: format!("non-finite feature value {cell:?}"),
                });
            }
            features[[i, j]] = v;
        }
    }

    let labels = label_idx.map(|li| {
        let cells: Vec<&str> = rows.iter().map(|r| &r[li]).collect();
        let parsed: Option<Vec<f64>> = cells
            .iter()
            .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        match parsed {
            Some(v) => Labels::Real(v),
            None => {
                let mut seen: Vec<&str> = Vec::new();
                let ids = cells
                    .iter()
                    .map(|c| match seen.iter().position(|s| s == c) {
                        Some(p) => p,
                        None => {
                            seen.push(c);
                            seen.len() - 1
                        }
                    })
                    .collect();
                Labels::Class { ids, n_classes: seen.len() }
            }
        }
    });

    let names = match &header {
        Some(h) => feature_cols.iter().map(|&c| h[c].clone()).collect(),
        None => (0..d).map(|j| format!("x{j}")).collect(),
    };
    Dataset::new(features, labels, names)
}

fn csv_error(e: csv::Error, line: usize) -> Error {
    Error::Ingest { row: line, col: 0, msg: e.to_string() }
}

/// Writes a header row (feature names, then `label` when present) and one line
/// per row. Floats use the shortest representation that round-trips.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ds.feature_names.clone();
    if ds.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_write_error)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for (i, row) in ds.features.outer_iter().enumerate() {
        rec.clear();
        rec.extend(row.iter().map(|v| format!("{v}")));
        match &ds.labels {
            Some(Labels::Real(v)) => rec.push(format!("{}", v[i])),
            Some(Labels::Class { ids, .. }) => rec.push(ids[i].to_string()),
            None => {}
        }
        w.write_record(&rec).map_err(csv_write_error)?;
    }
    w.flush().map_err(|e| Error::Io { path: "<csv writer>".into(), source: e })?;
    Ok(())
}

fn csv_write_error(e: csv::Error) -> Error {
    Error::Io { path: "<csv writer>".into(), source: std::io::Error::other(e.to_string()) }
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file =
        File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    write_csv(ds, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::Io { path: path.to_path_buf(), source },
        other => other,
    })
}

/// Uniformly samples `max_rows` rows without replacement, keeping the original
/// row order. Returns the input unchanged when it is already small enough.
pub fn subsample<R: Rng + ?Sized>(ds: &Dataset, max_rows: usize, rng: &mut R) -> Result<Dataset> {
    if max_rows == 0 {
        return Err(Error::arg("max_rows must be at least 1"));
    }
    if ds.n_rows() <= max_rows {
        return Ok(ds.clone());
    }
    let mut rows = index::sample(rng, ds.n_rows(), max_rows).into_vec();
    rows.sort_unstable();
    Ok(ds.select_rows(&rows))
}

/// Per-column location and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

impl ScalerParams {
    /// Fits on the columns of `x` with the `n - 1` convention. Constant columns
    /// get stddev 1 so they map to zeros.
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::arg(format!("standardization needs at least 2 rows, got {n}")));
        }
        let mut means = Vec::with_capacity(x.ncols());
        let mut stddevs = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
            let sd = (ss / (n as f64 - 1.0)).sqrt();
            means.push(m);
            stddevs.push(if sd > f64::EPSILON * m.abs().max(1.0) { sd } else { 1.0 });
        }
        Ok(ScalerParams { means, stddevs })
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.means.len() {
            return Err(Error::dim(format!(
                "scaler fitted on {} columns, got {}",
                self.means.len(),
                x.ncols()
            )));
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.means[j], self.stddevs[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }
}

/// Centers and scales every feature column. Labels are untouched.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, ScalerParams)> {
    let params = ScalerParams::fit(ds.features.view())?;
    let features = params.transform(ds.features.view())?;
    Ok((
        Dataset { features, labels: ds.labels.clone(), feature_names: ds.feature_names.clone() },
        params,
    ))
}

/// Appends i.i.d. standard normal columns until the dataset is `target_width`
/// wide. Existing columns are copied bit for bit.
pub fn augment_with_noise<R: Rng + ?Sized>(
    ds: &Dataset,
    target_width: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let (n, d) = ds.features.dim();
    if target_width < d {
        return Err(Error::arg(format!("target width {target_width} is below current width {d}")));
    }
    if target_width == d {
        return Ok(ds.clone());
    }
    let extra = target_width - d;
    let mut features = Array2::<f64>::zeros((n, target_width));
    features.slice_mut(s![.., ..d]).assign(&ds.features);
    for v in features.slice_mut(s![.., d..]).iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let mut names = ds.feature_names.clone();
    names.extend((0..extra).map(|k| format!("noise_{k}")));
    Ok(Dataset { features, labels: ds.labels.clone(), feature_names: names })
}

/// Class 1 iff the label exceeds the lower median of all labels.
pub fn binarize_labels(ds: &Dataset) -> Result<Dataset> {
    let y = match &ds.labels {
        Some(Labels::Real(v)) => v,
        Some(Labels::Class { .. }) => {
            return Err(Error::State("labels are already categorical".into()))
        }
        None => return Err(Error::State("dataset has no labels to binarize".into())),
    };
    let med = lower_median(y);
    let ids = y.iter().map(|&v| usize::from(v > med)).collect();
    Ok(Dataset {
        features: ds.features.clone(),
        labels: Some(Labels::Class { ids, n_classes: 2 }),
        feature_names: ds.feature_names.clone(),
    })
}

/// Linear map `x -> A (x - b)` with `A` of full row rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    matrix: Array2<f64>,
    offset: Array1<f64>,
}

pub const RANK_TOLERANCE: f64 = 1e-10;

/// Numerical rank from singular values above `RANK_TOLERANCE * sigma_max`.
pub fn matrix_rank(a: ArrayView2<'_, f64>) -> usize {
    let (r, c) = a.dim();
    let m = DMatrix::from_fn(r, c, |i, j| a[[i, j]]);
    let sv = m.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * smax).count()
}

impl ProjectionSpec {
    pub fn new(matrix: Array2<f64>, offset: Array1<f64>) -> Result<Self> {
        let (rows, cols) = matrix.dim();
        if rows == 0 || rows > cols {
            return Err(Error::arg(format!("projection must be d' x d with 1 <= d' <= d, got {rows}x{cols}")));
        }
        if offset.len() != cols {
            return Err(Error::dim(format!("offset length {} for width {cols}", offset.len())));
        }
        if matrix.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invariant("non-finite projection entry"));
        }
        let rank = matrix_rank(matrix.view());
        if rank < rows {
            return Err(Error::invariant(format!(
                "projection matrix has rank {rank}, needs full row rank {rows}"
            )));
        }
        Ok(ProjectionSpec { matrix, offset })
    }

    /// Zero-offset projection.
    pub fn linear(matrix: Array2<f64>) -> Result<Self> {
        let d = matrix.ncols();
        ProjectionSpec::new(matrix, Array1::zeros(d))
    }

    /// Feature-selection form: each output row picks one input coordinate.
    pub fn selector(d: usize, coords: &[usize]) -> Result<Self> {
        let mut a = Array2::<f64>::zeros((coords.len(), d));
        for (r, &c) in coords.iter().enumerate() {
            if c >= d {
                return Err(Error::arg(format!("coordinate {c} out of range for width {d}")));
            }
            a[[r, c]] = 1.0;
        }
        ProjectionSpec::linear(a)
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn offset(&self) -> &Array1<f64> {
        &self.offset
    }
}

pub fn project(ds: &Dataset, spec: &ProjectionSpec) -> Result<Dataset> {
    if spec.matrix.ncols() != ds.n_features() {
        return Err(Error::dim(format!(
            "projection width {} for dataset width {}",
            spec.matrix.ncols(),
            ds.n_features()
        )));
    }
    let centered = &ds.features - &spec.offset.view().insert_axis(Axis(0));
    let features = centered.dot(&spec.matrix.t());
    let names = (0..spec.matrix.nrows()).map(|j| format!("proj_{j}")).collect();
    Ok(Dataset { features, labels: ds.labels.clone(), feature_names: names })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    use crate::rng::seeded;

    fn ds(features: Array2<f64>) -> Dataset {
        Dataset::from_features(features).unwrap()
    }

    #[test]
    fn csv_without_labels() {
        let d = read_csv("1,2\n3,4\n5,6\n".as_bytes(), false, None).unwrap();
        assert_eq!((d.n_rows(), d.n_features()), (3, 2));
        assert!(d.labels().is_none());
        assert_eq!(d.features()[[2, 1]], 6.0);
    }

    #[test]
    fn csv_with_named_label() {
        let lc = LabelColumn::Name("y".into());
        let d = read_csv("a,b,y\n1,2,0.5\n3,4,1.5\n".as_bytes(), true, Some(&lc)).unwrap();
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.feature_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(d.labels(), Some(&Labels::Real(vec![0.5, 1.5])));
    }

    #[test]
    fn csv_string_labels_map_by_first_appearance() {
        let lc = LabelColumn::Index(0);
        let d = read_csv("dog,1\ncat,2\ndog,3\nemu,4\n".as_bytes(), false, Some(&lc)).unwrap();
        assert_eq!(d.labels(), Some(&Labels::Class { ids: vec![0, 1, 0, 2], n_classes: 3 }));
    }

    #[test]
    fn csv_rejects_non_numeric_feature() {
        let err = read_csv("a,b\n1,2\n3,abc\n".as_bytes(), true, None).unwrap_err();
        match err {
            Error::Ingest { row, col, .. } => assert_eq!((row, col), (3, 2)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_rejects_ragged_and_empty() {
        assert!(matches!(
            read_csv("1,2\n3\n".as_bytes(), false, None),
            Err(Error::Ingest { row: 2, .. })
        ));
        assert!(matches!(read_csv("".as_bytes(), false, None), Err(Error::Ingest { .. })));
        assert!(matches!(read_csv("a,b\n".as_bytes(), true, None), Err(Error::Ingest { .. })));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let x = array![[0.1, -1e-300], [1.0 / 3.0, 12345.678]];
        let d = Dataset::new(x, Some(Labels::Real(vec![2.5, -0.2])), vec!["p".into(), "q".into()])
            .unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let back =
            read_csv(buf.as_slice(), true, Some(&LabelColumn::Name("label".into()))).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn subsample_contract() {
        let mut rng = seeded(1);
        let small = ds(Array2::from_shape_fn((5, 2), |(i, j)| (i * 2 + j) as f64));
        assert_eq!(subsample(&small, 5, &mut rng).unwrap(), small);
        let abalone = ds(Array2::zeros((4177, 1)));
        assert_eq!(subsample(&abalone, 8000, &mut rng).unwrap().n_rows(), 4177);
        let big = ds(Array2::from_shape_fn((10_000, 1), |(i, _)| i as f64));
        let sub = subsample(&big, 8000, &mut rng).unwrap();
        assert_eq!(sub.n_rows(), 8000);
        let mut prev = -1.0;
        for v in sub.features().column(0) {
            assert!(*v > prev && v.fract() == 0.0 && *v < 10_000.0);
            prev = *v;
        }
    }

    #[test]
    fn standardize_examples() {
        let d = ds(array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]);
        let (z, p) = standardize(&d).unwrap();
        assert_eq!(p.means, vec![2.0, 5.0]);
        assert_eq!(p.stddevs, vec![1.0, 1.0]);
        assert_eq!(z.features().column(0).to_vec(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(z.features().column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert!(standardize(&ds(array![[1.0]])).is_err());
    }

    #[test]
    fn noise_augmentation() {
        let mut rng = seeded(3);
        let base = ds(Array2::from_shape_fn((8000, 7), |(i, j)| (i + j) as f64));
        let aug = augment_with_noise(&base, 32, &mut rng).unwrap();
        assert_eq!(aug.n_features(), 32);
        assert_eq!(aug.feature_names()[7], "noise_0");
        assert_eq!(aug.feature_names()[31], "noise_24");
        for i in 0..8000 {
            for j in 0..7 {
                assert_eq!(aug.features()[[i, j]].to_bits(), base.features()[[i, j]].to_bits());
            }
        }
        let bound = 4.0 / (8000f64).sqrt();
        for j in 7..32 {
            assert!(aug.features().column(j).mean().unwrap().abs() < bound);
        }
        let full = ds(Array2::zeros((3, 32)));
        assert_eq!(augment_with_noise(&full, 32, &mut rng).unwrap(), full);
        assert!(augment_with_noise(&full, 31, &mut rng).is_err());
    }

    #[test]
    fn binarize_examples() {
        let mk = |y: Vec<f64>| {
            ds(Array2::zeros((y.len(), 1))).with_labels(Some(Labels::Real(y))).unwrap()
        };
        let ids = |d: Dataset| match d.labels().unwrap() {
            Labels::Class { ids, .. } => ids.clone(),
            _ => unreachable!(),
        };
        assert_eq!(ids(binarize_labels(&mk(vec![1.0, 2.0, 3.0, 4.0, 5.0])).unwrap()), vec![0, 0, 0, 1, 1]);
        assert_eq!(ids(binarize_labels(&mk(vec![4.0; 4])).unwrap()), vec![0; 4]);
        assert_eq!(ids(binarize_labels(&mk(vec![10.0, -2.0, 7.0, 0.0])).unwrap()), vec![1, 0, 1, 0]);
        assert!(matches!(binarize_labels(&ds(array![[1.0]])), Err(Error::State(_))));
    }

    #[test]
    fn projection_examples() {
        let d = ds(array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let id = ProjectionSpec::linear(Array2::eye(3)).unwrap();
        assert_eq!(project(&d, &id).unwrap().features(), d.features());
        let sel = ProjectionSpec::selector(3, &[0, 1]).unwrap();
        assert_eq!(project(&d, &sel).unwrap().features(), array![[1.0, 2.0], [4.0, 5.0]]);
        let sum = ProjectionSpec::linear(array![[1.0, 1.0, 1.0]]).unwrap();
        let p = project(&d, &sum).unwrap();
        assert_eq!(p.features()[[0, 0]], 6.0);
        assert_eq!(p.feature_names(), &["proj_0".to_string()]);
        let shifted = ProjectionSpec::new(array![[1.0, 0.0, 0.0]], array![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(project(&d, &shifted).unwrap().features()[[1, 0]], 3.0);
    }

    #[test]
    fn projection_rejects_rank_deficiency_and_width() {
        assert!(matches!(
            ProjectionSpec::linear(array![[1.0, 2.0], [2.0, 4.0]]),
            Err(Error::Invariant(_))
        ));
        let d = ds(array![[1.0, 2.0]]);
        let p = ProjectionSpec::linear(Array2::eye(3)).unwrap();
        assert!(matches!(project(&d, &p), Err(Error::Dimension(_))));
    }

    proptest! {
        #[test]
        fn standardize_is_idempotent(vals in prop::collection::vec(-1e3f64..1e3, 6..40)) {
            let n = vals.len() / 2;
            let x = Array2::from_shape_vec((n, 2), vals[..2 * n].to_vec()).unwrap();
            let (once, _) = standardize(&ds(x)).unwrap();
            let (twice, _) = standardize(&once).unwrap();
            for (a, b) in once.features().iter().zip(twice.features().iter()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            for col in once.features().columns() {
                let m = col.mean().unwrap();
                prop_assert!(m.abs() < 1e-10);
            }
        }

        #[test]
        fn permutation_selector_reindexes_columns(perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle(),
                                                  vals in prop::collection::vec(-10f64..10.0, 20)) {
            let x = Array2::from_shape_vec((4, 5), vals).unwrap();
            let d = ds(x.clone());
            let p = project(&d, &ProjectionSpec::selector(5, &perm).unwrap()).unwrap();
            prop_assert_eq!(p.features().to_owned(), x.select(Axis(1), &perm));
        }
    }
}
