//! Discretized functions on a shared abscissa grid.
//!
//! All L² geometry (inner products, norms, distances) is computed with
//! trapezoidal quadrature weights attached to the [`Grid`]. Curves are
//! immutable once built and hold their grid behind an [`Arc`], so samples can be
//! shared freely across threads.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Strictly increasing abscissae with trapezoidal quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T: Scalar> {
    points: Vec<T>,
    quad_weights: Vec<T>,
}

impl<T: Scalar> Grid<T> {
    pub fn new(points: Vec<T>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidGrid("non-finite abscissa".into()));
        }
        if let Some(j) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "abscissae not strictly increasing at position {}",
                j + 1
            )));
        }
        let s = points.len();
        let half = T::lit(0.5);
        let mut quad_weights = vec![T::zero(); s];
        quad_weights[0] = (points[1] - points[0]) * half;
        quad_weights[s - 1] = (points[s - 1] - points[s - 2]) * half;
        for j in 1..s - 1 {
            quad_weights[j] = (points[j + 1] - points[j - 1]) * half;
        }
        if quad_weights.iter().any(|w| *w <= T::zero()) {
            return Err(Error::InvalidGrid("degenerate quadrature weight".into()));
        }
        Ok(Self {
            points,
            quad_weights,
        })
    }

    /// `size` equispaced points on `[a, b]`.
    pub fn uniform(a: T, b: T, size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {size}"
            )));
        }
        let step = (b - a) / T::of_usize(size - 1);
        let mut points: Vec<T> = (0..size).map(|j| a + step * T::of_usize(j)).collect();
        points[size - 1] = b;
        Self::new(points)
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn quad_weights(&self) -> &[T] {
        &self.quad_weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Domain `[a, b]`.
    pub fn domain(&self) -> (T, T) {
        (self.points[0], self.points[self.points.len() - 1])
    }

    /// Quadrature of the tabulated values `values` against the grid weights.
    pub fn integrate(&self, values: &[T]) -> T {
        self.quad_weights
            .iter()
            .zip(values)
            .fold(T::zero(), |acc, (w, v)| acc + *w * *v)
    }
}

/// A function tabulated on a [`Grid`].
#[derive(Debug, Clone)]
pub struct Curve<T: Scalar> {
    grid: Arc<Grid<T>>,
    values: Vec<T>,
}

impl<T: Scalar> Curve<T> {
    pub fn new(grid: Arc<Grid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite curve value at position {j}")));
        }
        Ok(Self { grid, values })
    }

    /// Tabulates `f` on the grid.
    pub fn from_fn(grid: Arc<Grid<T>>, f: impl Fn(T) -> T) -> Result<Self> {
        let values = grid.points().iter().map(|&s| f(s)).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: Arc<Grid<T>>, c: T) -> Result<Self> {
        let values = vec![c; grid.len()];
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ensure_same_grid(&self, other: &Curve<T>) -> Result<()> {
        same_grid(&self.grid, &other.grid)
    }

    /// Pointwise `self + scale * other`.
    pub fn axpy(&self, scale: T, other: &Curve<T>) -> Result<Curve<T>> {
        self.ensure_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| *a + scale * *b)
            .collect();
        Curve::new(self.grid.clone(), values)
    }

    pub fn sub(&self, other: &Curve<T>) -> Result<Curve<T>> {
        self.axpy(-T::one(), other)
    }

    pub fn scale(&self, c: T) -> Curve<T> {
        Curve {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| *v * c).collect(),
        }
    }

    /// `∫ f(s) ds` by quadrature.
    pub fn integral(&self) -> T {
        self.grid.integrate(&self.values)
    }

    /// `∫ |f(s)| ds` by quadrature.
    pub fn abs_integral(&self) -> T {
        self.grid
            .quad_weights()
            .iter()
            .zip(&self.values)
            .fold(T::zero(), |acc, (w, v)| acc + *w * v.abs())
    }

    pub fn norm(&self) -> T {
        self_inner(&self.grid, &self.values, &self.values).sqrt()
    }
}

pub(crate) fn same_grid<T: Scalar>(a: &Arc<Grid<T>>, b: &Arc<Grid<T>>) -> Result<()> {
    if Arc::ptr_eq(a, b) || a.points == b.points {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "grids of length {} and {} differ",
            a.len(),
            b.len()
        )))
    }
}

#[inline]
fn self_inner<T: Scalar>(grid: &Grid<T>, f: &[T], g: &[T]) -> T {
    grid.quad_weights
        .iter()
        .zip(f.iter().zip(g))
        .fold(T::zero(), |acc, (w, (a, b))| acc + *w * (*a * *b))
}

#[inline]
pub(crate) fn squared_distance_raw<T: Scalar>(weights: &[T], f: &[T], g: &[T]) -> T {
    weights
        .iter()
        .zip(f.iter().zip(g))
        .fold(T::zero(), |acc, (w, (a, b))| {
            let d = *a - *b;
            acc + *w * (d * d)
        })
}

/// `⟨f, g⟩ = Σ_j w_j f_j g_j`. Exactly symmetric.
pub fn inner_product<T: Scalar>(f: &Curve<T>, g: &Curve<T>) -> Result<T> {
    f.ensure_same_grid(g)?;
    Ok(self_inner(&f.grid, &f.values, &g.values))
}

/// `‖f − g‖` in L².
pub fn l2_distance<T: Scalar>(f: &Curve<T>, g: &Curve<T>) -> Result<T> {
    f.ensure_same_grid(g)?;
    Ok(squared_distance_raw(f.grid.quad_weights(), &f.values, &g.values).sqrt())
}

/// An ordered collection of curves on one grid.
#[derive(Debug, Clone)]
pub struct CurveSample<T: Scalar> {
    grid: Arc<Grid<T>>,
    curves: Vec<Curve<T>>,
    ids: Option<Vec<String>>,
}

impl<T: Scalar> CurveSample<T> {
    pub fn new(curves: Vec<Curve<T>>) -> Result<Self> {
        let first = curves
            .first()
            .ok_or(Error::InsufficientSample { needed: 1, got: 0 })?;
        let grid = first.grid.clone();
        for c in &curves[1..] {
            same_grid(&grid, &c.grid)?;
        }
        Ok(Self {
            grid,
            curves,
            ids: None,
        })
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.curves.len() {
            return Err(Error::DimensionMismatch {
                expected: self.curves.len(),
                got: ids.len(),
            });
        }
        self.ids = Some(ids);
        Ok(self)
    }

    /// Builds a sample from rows of values on `grid`.
    pub fn from_rows(grid: Arc<Grid<T>>, rows: Vec<Vec<T>>) -> Result<Self> {
        let curves = rows
            .into_iter()
            .map(|r| Curve::new(grid.clone(), r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(curves)
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn curves(&self) -> &[Curve<T>] {
        &self.curves
    }

    pub fn curve(&self, i: usize) -> &Curve<T> {
        &self.curves[i]
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Sub-sample keeping the given indices in order. Ids follow along.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let curves = indices.iter().map(|&i| self.curves[i].clone()).collect();
        let mut out = Self::new(curves)?;
        if let Some(ids) = &self.ids {
            out.ids = Some(indices.iter().map(|&i| ids[i].clone()).collect());
        }
        Ok(out)
    }

    /// Sample with observation `skip` removed.
    pub fn without(&self, skip: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| i != skip).collect();
        self.select(&idx)
    }

    /// Symmetric `n × n` matrix of pairwise L² distances, row-major.
    pub fn pairwise_distances(&self) -> Vec<T> {
        let n = self.len();
        let w = self.grid.quad_weights();
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = squared_distance_raw(w, &self.curves[i].values, &self.curves[j].values)
                    .sqrt();
                out[i * n + j] = d;
                out[j * n + i] = d;
            }
        }
        out
    }
}

/// Distances `‖X_i − x0‖` for every curve of the sample.
pub fn distance_matrix<T: Scalar>(sample: &CurveSample<T>, x0: &Curve<T>) -> Result<Vec<T>> {
    same_grid(sample.grid(), x0.grid())?;
    let w = sample.grid.quad_weights();
    Ok(sample
        .curves
        .iter()
        .map(|c| squared_distance_raw(w, &c.values, &x0.values).sqrt())
        .collect())
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

fn parse_field<T: Scalar>(field: &str, row: usize, col: usize) -> Result<T> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Data(format!("row {row}, column {col}: cannot parse {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("row {row}, column {col}: non-finite value")));
    }
    Ok(T::lit(v))
}

/// Reads `id,s_1,…,s_S` / `id,v_1,…,v_S` curve files.
pub fn read_curves_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<CurveSample<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let header = rdr.headers()?.clone();
    if header.len() < 3 {
        return Err(Error::Data(
            "curve header must be `id,s_1,...,s_S` with S >= 2".into(),
        ));
    }
    let points = header
        .iter()
        .enumerate()
        .skip(1)
        .map(|(col, f)| parse_field::<T>(f, 1, col + 1))
        .collect::<Result<Vec<_>>>()?;
    let grid = Arc::new(Grid::new(points)?);
    let mut ids = Vec::new();
    let mut curves = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 2;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Data(format!(
                "row {row}: expected {} fields, got {}",
                header.len(),
                rec.len()
            )));
        }
        ids.push(rec[0].trim().to_string());
        let values = rec
            .iter()
            .enumerate()
            .skip(1)
            .map(|(col, f)| parse_field::<T>(f, row, col + 1))
            .collect::<Result<Vec<_>>>()?;
        curves.push(Curve::new(grid.clone(), values)?);
    }
    CurveSample::new(curves)?.with_ids(ids)
}

/// Reads an `id,y` responses file and aligns it to `ids`.
pub fn read_responses_csv<T: Scalar>(path: impl AsRef<Path>, ids: &[String]) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let header = rdr.headers()?.clone();
    if header.len() != 2 {
        return Err(Error::Data("responses header must be `id,y`".into()));
    }
    let mut by_id = std::collections::HashMap::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 2;
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Data(format!("row {row}: expected 2 fields")));
        }
        let y = parse_field::<T>(&rec[1], row, 2)?;
        if by_id.insert(rec[0].trim().to_string(), y).is_some() {
            return Err(Error::Data(format!("row {row}: duplicate id {:?}", &rec[0])));
        }
    }
    if by_id.len() != ids.len() {
        return Err(Error::Data(format!(
            "responses file has {} ids, curve file has {}",
            by_id.len(),
            ids.len()
        )));
    }
    ids.iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::Data(format!("no response for curve id {id:?}")))
        })
        .collect()
}

/// Formats with 17 significant digits.
pub fn fmt_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_curves_csv<T: Scalar>(path: impl AsRef<Path>, sample: &CurveSample<T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["id".to_string()];
    header.extend(sample.grid().points().iter().map(|p| p.to_f64_lossy().to_string()));
    w.write_record(&header)?;
    for (i, c) in sample.curves().iter().enumerate() {
        let id = sample
            .ids()
            .map(|ids| ids[i].clone())
            .unwrap_or_else(|| format!("{i}"));
        let mut rec = vec![id];
        rec.extend(c.values().iter().map(|v| fmt_sig17(v.to_f64_lossy())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_responses_csv<T: Scalar>(
    path: impl AsRef<Path>,
    ids: &[String],
    responses: &[T],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["id", "y"])?;
    for (id, y) in ids.iter().zip(responses) {
        w.write_record([id.clone(), fmt_sig17(y.to_f64_lossy())])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_grid(s: usize) -> Arc<Grid<f64>> {
        Arc::new(Grid::uniform(0.0, 1.0, s).unwrap())
    }

    #[test]
    fn trapezoid_weights_sum_to_domain_length() {
        let g = Grid::new(vec![0.0, 0.1, 0.35, 0.9, 2.0]).unwrap();
        let total: f64 = g.quad_weights().iter().sum();
        assert!((total - 2.0).abs() < 1e-12 * 2.0);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(Grid::<f64>::new(vec![0.0]).is_err());
        assert!(Grid::<f64>::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(Grid::<f64>::new(vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let g = unit_grid(101);
        let one = Curve::constant(g.clone(), 1.0).unwrap();
        assert_abs_diff_eq!(inner_product(&one, &one).unwrap(), 1.0, epsilon = 1e-12);
        let s = Curve::from_fn(g.clone(), |s| s).unwrap();
        assert_abs_diff_eq!(inner_product(&s, &one).unwrap(), 0.5, epsilon = 1e-6);

        let g = unit_grid(201);
        let tau = std::f64::consts::TAU;
        let sin = Curve::from_fn(g.clone(), |s| (tau * s).sin()).unwrap();
        let cos = Curve::from_fn(g, |s| (tau * s).cos()).unwrap();
        assert_abs_diff_eq!(inner_product(&sin, &cos).unwrap(), 0.0, epsilon = 1e-4);
    }

    #[test]
    fn l2_distance_examples() {
        let g = unit_grid(101);
        let one = Curve::constant(g.clone(), 1.0).unwrap();
        let zero = Curve::constant(g.clone(), 0.0).unwrap();
        let s = Curve::from_fn(g, |s| s).unwrap();
        assert_eq!(l2_distance(&s, &s).unwrap(), 0.0);
        assert_abs_diff_eq!(l2_distance(&one, &zero).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            l2_distance(&s, &zero).unwrap(),
            1.0 / 3f64.sqrt(),
            epsilon = 1e-4
        );
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = Curve::constant(unit_grid(11), 1.0).unwrap();
        let b = Curve::constant(unit_grid(12), 1.0).unwrap();
        assert!(matches!(inner_product(&a, &b), Err(Error::GridMismatch(_))));
        assert!(matches!(l2_distance(&a, &b), Err(Error::GridMismatch(_))));
        let sample = CurveSample::new(vec![a]).unwrap();
        assert!(distance_matrix(&sample, &b).is_err());
    }

    #[test]
    fn equal_but_distinct_grid_objects_are_compatible() {
        let a = Curve::constant(unit_grid(11), 1.0).unwrap();
        let b = Curve::constant(unit_grid(11), 2.0).unwrap();
        assert_abs_diff_eq!(inner_product(&a, &b).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn distance_matrix_examples() {
        let g = unit_grid(51);
        let x0 = Curve::from_fn(g.clone(), |s| s * s).unwrap();
        let single = CurveSample::new(vec![x0.clone()]).unwrap();
        assert_eq!(distance_matrix(&single, &x0).unwrap(), vec![0.0]);

        let shifted = x0.axpy(1.0, &Curve::constant(g, 1.0).unwrap()).unwrap();
        let pair = CurveSample::new(vec![x0.clone(), shifted]).unwrap();
        let d = distance_matrix(&pair, &x0).unwrap();
        assert_eq!(d[0], 0.0);
        assert_abs_diff_eq!(d[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_functions_integrate_exactly_on_uniform_grid() {
        let g = unit_grid(37);
        let f = Curve::from_fn(g, |s| 3.0 * s - 0.25).unwrap();
        assert_abs_diff_eq!(f.integral(), 1.25, epsilon = 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let g = Arc::new(Grid::<f32>::uniform(0.0, 1.0, 101).unwrap());
        let s = Curve::from_fn(g.clone(), |s| s).unwrap();
        let one = Curve::constant(g, 1.0f32).unwrap();
        assert!((inner_product(&s, &one).unwrap() - 0.5).abs() < 1e-5);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Arc::new(Grid::new(vec![0.0, 0.25, 0.6, 1.0]).unwrap());
        let sample = CurveSample::from_rows(
            g,
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![-0.1, 0.2, 1.0 / 3.0, 9.5]],
        )
        .unwrap()
        .with_ids(vec!["a".into(), "b".into()])
        .unwrap();
        let cpath = dir.path().join("curves.csv");
        let rpath = dir.path().join("responses.csv");
        write_curves_csv(&cpath, &sample).unwrap();
        // responses in a different order than the curves
        std::fs::write(&rpath, "id,y\nb,2.5\na,-1\n").unwrap();

        let back: CurveSample<f64> = read_curves_csv(&cpath).unwrap();
        assert_eq!(back.grid().points(), sample.grid().points());
        for (a, b) in back.curves().iter().zip(sample.curves()) {
            assert_eq!(a.values(), b.values());
        }
        let y: Vec<f64> = read_responses_csv(&rpath, back.ids().unwrap()).unwrap();
        assert_eq!(y, vec![-1.0, 2.5]);
    }

    #[test]
    fn csv_schema_errors_carry_context() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "id,0,1\na,1,oops\n").unwrap();
        let err = read_curves_csv::<f64>(&p).unwrap_err();
        assert!(err.to_string().contains("row 2, column 3"), "{err}");

        let good = dir.path().join("good.csv");
        std::fs::write(&good, "id,0,1\na,1,2\n").unwrap();
        let r = dir.path().join("r.csv");
        std::fs::write(&r, "id,y\nz,1\n").unwrap();
        let s: CurveSample<f64> = read_curves_csv(&good).unwrap();
        assert!(read_responses_csv::<f64>(&r, s.ids().unwrap()).is_err());
    }
}
