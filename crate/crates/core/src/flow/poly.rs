//! Local quadratic signal model: around every pixel the image is
//! approximated by `f(p + x) ≈ xᵀ A x + bᵀ x + c` in the weighted
//! least-squares sense, with Gaussian applicability over a square
//! neighborhood.

use super::plane::{reflect101, Plane};
use crate::exec::Exec;
use crate::{Error, GrayFrame, Result};

/// Quadratic model coefficients at one pixel. `x` is the column offset and
/// `y` the row offset.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Quadratic {
    pub c: f64,
    pub bx: f64,
    pub by: f64,
    pub axx: f64,
    pub axy: f64,
    pub ayy: f64,
}

impl Quadratic {
    pub fn b(&self) -> [f64; 2] {
        [self.bx, self.by]
    }

    /// The symmetric quadratic-term matrix.
    pub fn a(&self) -> [[f64; 2]; 2] {
        [[self.axx, self.axy], [self.axy, self.ayy]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyExpansion {
    pub width: usize,
    pub height: usize,
    pub coeffs: Vec<Quadratic>,
}

impl PolyExpansion {
    pub fn at(&self, x: usize, y: usize) -> &Quadratic {
        &self.coeffs[y * self.width + x]
    }
}

/// Precomputed least-squares projector for one neighborhood size and σ.
#[derive(Debug, Clone)]
pub(crate) struct Expander {
    half: usize,
    gauss: Vec<f64>,
    /// Inverse Gram matrix over basis `[1, x, y, x², y², xy]`.
    ginv: [[f64; 6]; 6],
}

impl Expander {
    pub fn new(poly_n: usize, sigma: f64) -> Result<Self> {
        if poly_n < 3 || poly_n.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "polynomial neighborhood must be odd and >= 3, got {poly_n}"
            )));
        }
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(Error::Config("polynomial sigma must be positive".into()));
        }
        let half = poly_n / 2;
        let gauss: Vec<f64> = (-(half as isize)..=half as isize)
            .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let mut gram = [[0.0; 6]; 6];
        for (j, gy) in gauss.iter().enumerate() {
            for (i, gx) in gauss.iter().enumerate() {
                let x = i as f64 - half as f64;
                let y = j as f64 - half as f64;
                let basis = [1.0, x, y, x * x, y * y, x * y];
                for r in 0..6 {
                    for c in 0..6 {
                        gram[r][c] += gx * gy * basis[r] * basis[c];
                    }
                }
            }
        }
        let ginv = invert6(gram).ok_or_else(|| Error::Config("singular expansion basis".into()))?;
        Ok(Expander { half, gauss, ginv })
    }

    pub fn neighborhood(&self) -> usize {
        2 * self.half + 1
    }

    pub fn expand(&self, plane: &Plane, exec: Exec) -> Result<PolyExpansion> {
        let (w, h) = (plane.width, plane.height);
        let n = self.neighborhood();
        if w < n || h < n {
            return Err(Error::Frame(format!(
                "{w}x{h} frame is smaller than the {n}x{n} expansion neighborhood"
            )));
        }
        let half = self.half as isize;

        // Vertical pass: Σ g(y)·yᵏ·f for k = 0, 1, 2.
        let mut vert = vec![[0.0f64; 3]; w * h];
        exec.for_each_row(&mut vert, w, |y, row| {
            for (k, g) in self.gauss.iter().enumerate() {
                let dy = k as isize - half;
                let src = reflect101(y as isize + dy, h) * w;
                let dy = dy as f64;
                for (x, acc) in row.iter_mut().enumerate() {
                    let v = g * plane.data[src + x];
                    acc[0] += v;
                    acc[1] += v * dy;
                    acc[2] += v * dy * dy;
                }
            }
        });

        // Horizontal pass, then project onto the basis.
        let mut coeffs = vec![Quadratic::default(); w * h];
        exec.for_each_row(&mut coeffs, w, |y, row| {
            let vrow = &vert[y * w..(y + 1) * w];
            for (x, out) in row.iter_mut().enumerate() {
                // moments against 1, x, y, x², y², xy
                let mut m = [0.0f64; 6];
                for (k, g) in self.gauss.iter().enumerate() {
                    let dx = k as isize - half;
                    let [v0, v1, v2] = vrow[reflect101(x as isize + dx, w)];
                    let dx = dx as f64;
                    m[0] += g * v0;
                    m[1] += g * dx * v0;
                    m[2] += g * v1;
                    m[3] += g * dx * dx * v0;
                    m[4] += g * v2;
                    m[5] += g * dx * v1;
                }
                let mut r = [0.0f64; 6];
                for (ri, gi) in r.iter_mut().zip(&self.ginv) {
                    *ri = gi.iter().zip(&m).map(|(a, b)| a * b).sum();
                }
                *out = Quadratic {
                    c: r[0],
                    bx: r[1],
                    by: r[2],
                    axx: r[3],
                    ayy: r[4],
                    axy: r[5] / 2.0,
                };
            }
        });
        Ok(PolyExpansion {
            width: w,
            height: h,
            coeffs,
        })
    }
}

/// Fits the quadratic model at every pixel of `frame` over a
/// `poly_n × poly_n` Gaussian-weighted neighborhood (reflect-101 borders).
pub fn poly_expansion(frame: &GrayFrame, poly_n: usize, poly_sigma: f64) -> Result<PolyExpansion> {
    Expander::new(poly_n, poly_sigma)?.expand(&Plane::from_frame(frame), Exec::default())
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert6(mut m: [[f64; 6]; 6]) -> Option<[[f64; 6]; 6]> {
    let mut inv = [[0.0; 6]; 6];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..6 {
        let pivot = (col..6).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col];
        for c in 0..6 {
            m[col][c] /= p;
            inv[col][c] /= p;
        }
        for r in 0..6 {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..6 {
                        m[r][c] -= f * m[col][c];
                        inv[r][c] -= f * inv[col][c];
                    }
                }
            }
        }
    }
    Some(inv)
}
