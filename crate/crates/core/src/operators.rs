//! Concrete realizations of `L`: the second-order operator with involution
//! `-u''(x) + eps u''(pi - x)` on `[0, pi]` with Dirichlet data, the Landau level
//! sequence, and user-supplied spectra.

use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::error::{QHeatError, Result};
use crate::spectral::{CoeffVec, Spectrum};

/// Smallest default grid, in intervals.
const MIN_GRID: usize = 512;

/// Ascending eigenvalues of the involution operator, tagged with the sine frequency `n`.
/// Modes with equal eigenvalues are ordered by `n`.
pub fn involution_spectrum(epsilon: f64, modes: usize) -> Result<Spectrum> {
    check_epsilon(epsilon)?;
    if modes == 0 {
        return Err(QHeatError::InvalidParameter {
            name: "modes",
            reason: "at least one mode is required".into(),
        });
    }
    let even = 1.0 + epsilon;
    let odd = 1.0 - epsilon;
    let slowest = even.min(odd);
    let eigenvalue = |n: usize| if n.is_multiple_of(2) { even } else { odd } * (n * n) as f64;

    let mut n_max = 2 * modes;
    loop {
        let mut pairs: Vec<(f64, usize)> = (1..=n_max).map(|n| (eigenvalue(n), n)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        pairs.truncate(modes);
        let kth = pairs[modes - 1].0;
        // every n > n_max has eigenvalue at least slowest * (n_max + 1)^2
        if slowest * ((n_max + 1) * (n_max + 1)) as f64 > kth {
            let (values, labels): (Vec<f64>, Vec<usize>) = pairs.into_iter().unzip();
            let lambda0 = 0.5 * values[0];
            return Spectrum::with_labels(values, labels, lambda0);
        }
        n_max *= 2;
    }
}

/// One representative `(2n + 1) B` per Landau level, `n = 0..K-1`.
pub fn landau_spectrum(b: f64, modes: usize) -> Result<Spectrum> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(QHeatError::InvalidParameter {
            name: "B",
            reason: format!("field strength must be positive, got {b}"),
        });
    }
    if modes == 0 {
        return Err(QHeatError::InvalidParameter {
            name: "modes",
            reason: "at least one mode is required".into(),
        });
    }
    let values = (0..modes).map(|n| (2 * n + 1) as f64 * b).collect();
    Spectrum::new(values, 0.5 * b)
}

/// Validated user spectrum.
pub fn custom_spectrum(values: Vec<f64>, lambda0: f64) -> Result<Spectrum> {
    Spectrum::new(values, lambda0)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.abs() < 1.0 {
        Ok(())
    } else {
        Err(QHeatError::InvalidParameter {
            name: "epsilon",
            reason: format!("|epsilon| must be below 1, got {epsilon}"),
        })
    }
}

/// Samples on the uniform grid `x_i = i pi / N`, `i = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFn {
    x: Vec<f64>,
    values: Vec<f64>,
}

fn grid_points(intervals: usize) -> Vec<f64> {
    (0..=intervals).map(|i| PI * i as f64 / intervals as f64).collect()
}

impl SpatialFn {
    /// Accepts samples on a uniform grid over `[0, pi]` (relative spacing error below 1e-9).
    pub fn new(x: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if x.len() != values.len() {
            return Err(QHeatError::DimensionMismatch {
                expected: x.len(),
                found: values.len(),
            });
        }
        if x.len() < 3 {
            return Err(QHeatError::Data(format!("need at least 3 grid points, got {}", x.len())));
        }
        let n = x.len() - 1;
        let h = PI / n as f64;
        for (i, &xi) in x.iter().enumerate() {
            if (xi - i as f64 * h).abs() > 1e-9 * PI {
                return Err(QHeatError::Data(format!(
                    "grid point {i} is {xi}, expected {} on a uniform grid over [0, pi]",
                    i as f64 * h
                )));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(QHeatError::Data(format!("non-finite sample {v}")));
        }
        Ok(Self {
            x: grid_points(n),
            values,
        })
    }

    pub fn sample(intervals: usize, f: impl Fn(f64) -> f64) -> Self {
        let x = grid_points(intervals);
        let values = x.iter().map(|&t| f(t)).collect();
        Self { x, values }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of grid intervals `N`.
    pub fn intervals(&self) -> usize {
        self.x.len() - 1
    }

    /// Fails unless both endpoint samples vanish to within `tol * max(1, sup|f|)`.
    pub fn check_dirichlet(&self, tol: f64) -> Result<()> {
        let scale = self.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let (first, last) = (self.values[0], self.values[self.values.len() - 1]);
        if first.abs() > tol * scale || last.abs() > tol * scale {
            return Err(QHeatError::Boundary(format!("f(0) = {first}, f(pi) = {last}")));
        }
        Ok(())
    }

    /// Composite Simpson quadrature of the samples over `[0, pi]`.
    pub fn integrate(&self) -> Result<f64> {
        simpson(&self.values)
    }

    /// `L^2(0, pi)` norm by Simpson quadrature.
    pub fn l2_norm(&self) -> Result<f64> {
        let squares: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        Ok(simpson(&squares)?.sqrt())
    }

    /// Reads `x,value` rows (header optional).
    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut x = Vec::new();
        let mut values = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| QHeatError::Data(e.to_string()))?;
            if record.len() != 2 {
                return Err(QHeatError::Data(format!("row {} has {} columns, expected 2", line + 1, record.len())));
            }
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(p) => {
                    x.push(p[0]);
                    values.push(p[1]);
                }
                Err(_) if line == 0 => continue,
                Err(e) => return Err(QHeatError::Data(format!("row {}: {e}", line + 1))),
            }
        }
        Self::new(x, values)
    }

    /// Writes `x,value` rows with a header.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| QHeatError::Data(e.to_string());
        w.write_record(["x", "value"]).map_err(io)?;
        for (x, v) in self.x.iter().zip(&self.values) {
            w.write_record([format!("{x:.16e}"), format!("{v:.16e}")]).map_err(io)?;
        }
        w.flush().map_err(|e| QHeatError::Data(e.to_string()))
    }
}

fn simpson(values: &[f64]) -> Result<f64> {
    let n = values.len() - 1;
    if !n.is_multiple_of(2) {
        return Err(QHeatError::Data(format!("Simpson quadrature needs an even number of intervals, got {n}")));
    }
    let h = PI / n as f64;
    let inner: f64 = values[1..n]
        .iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { 4.0 * v } else { 2.0 * v })
        .sum();
    Ok(h / 3.0 * (values[0] + inner + values[n]))
}

/// `sqrt(2/pi) sin(n x)`, the normalized Dirichlet eigenfunction with frequency `n`.
pub fn eigenfunction(n: usize, x: f64) -> f64 {
    (2.0 / PI).sqrt() * (n as f64 * x).sin()
}

/// The involution operator truncated to its lowest `K` modes, with a spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InvolutionOperator {
    epsilon: f64,
    spectrum: Spectrum,
    grid: usize,
}

impl InvolutionOperator {
    /// `grid` is the number of intervals: even and at least `8 K`.
    pub fn new(epsilon: f64, modes: usize, grid: usize) -> Result<Self> {
        let spectrum = involution_spectrum(epsilon, modes)?;
        if !grid.is_multiple_of(2) || grid < 8 * modes {
            return Err(QHeatError::InvalidParameter {
                name: "grid",
                reason: format!("need an even grid with at least {} intervals, got {grid}", 8 * modes),
            });
        }
        Ok(Self {
            epsilon,
            spectrum,
            grid,
        })
    }

    /// Grid of `max(512, 8 n_max)` intervals, rounded up to even.
    pub fn with_default_grid(epsilon: f64, modes: usize) -> Result<Self> {
        let spectrum = involution_spectrum(epsilon, modes)?;
        let n_max = *spectrum.labels().iter().max().expect("spectrum is never empty");
        let grid = (8 * n_max).max(MIN_GRID);
        Self::new(epsilon, modes, grid + grid % 2)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn modes(&self) -> usize {
        self.spectrum.len()
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Samples `f` on the operator grid.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> SpatialFn {
        SpatialFn::sample(self.grid, f)
    }

    fn check_grid(&self, f: &SpatialFn) -> Result<()> {
        if f.intervals() != self.grid {
            return Err(QHeatError::DimensionMismatch {
                expected: self.grid + 1,
                found: f.x.len(),
            });
        }
        Ok(())
    }
}

/// `c_k = <f, sqrt(2/pi) sin(n_k x)>` by composite Simpson quadrature.
pub fn forward_transform(f: &SpatialFn, op: &InvolutionOperator) -> Result<CoeffVec> {
    op.check_grid(f)?;
    f.check_dirichlet(1e-12)?;
    let coeffs = op
        .spectrum()
        .labels()
        .iter()
        .map(|&n| {
            let product: Vec<f64> = f.x.iter().zip(&f.values).map(|(&x, v)| v * eigenfunction(n, x)).collect();
            simpson(&product)
        })
        .collect::<Result<Vec<_>>>()?;
    CoeffVec::new(coeffs)
}

/// `sum_k c_k sqrt(2/pi) sin(n_k x)` on the operator grid.
pub fn inverse_transform(c: &CoeffVec, op: &InvolutionOperator) -> Result<SpatialFn> {
    c.check_len(op.spectrum())?;
    let labels = op.spectrum().labels();
    Ok(op.sample(|x| {
        labels
            .iter()
            .zip(c.as_slice())
            .map(|(&n, &ck)| ck * eigenfunction(n, x))
            .sum()
    }))
}

/// `-f''(x) + eps f''(pi - x)` by second-order central differences. The reflected
/// point of grid index `i` is `N - i`. Boundary rows are set to 0.
pub fn apply_involution(f: &SpatialFn, epsilon: f64) -> Result<SpatialFn> {
    check_epsilon(epsilon)?;
    let n = f.intervals();
    let h = PI / n as f64;
    let v = &f.values;
    let second = |i: usize| (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
    let mut out = vec![0.0; n + 1];
    for (i, o) in out.iter_mut().enumerate().take(n).skip(1) {
        *o = -second(i) + epsilon * second(n - i);
    }
    Ok(SpatialFn {
        x: f.x.clone(),
        values: out,
    })
}
