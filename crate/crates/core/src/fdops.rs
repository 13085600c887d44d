//! Fifth-order upwind finite differences in conservative flux-difference form.
//!
//! The kinetic transport operators `D^+`/`D^-` and the macroscopic KFVS
//! update share [`reconstruct_interface`] and [`flux_difference`], so their
//! discrete moments agree exactly.

use std::str::FromStr;

use crate::error::{LomacError, Result};

/// Interface weights for right-moving flux, over offsets `j-2 ..= j+2`.
pub const PLUS_COEFFS: [f64; 5] = [
    1.0 / 30.0,
    -13.0 / 60.0,
    47.0 / 60.0,
    9.0 / 20.0,
    -1.0 / 20.0,
];
/// Interface weights for left-moving flux, over offsets `j-1 ..= j+3`.
pub const MINUS_COEFFS: [f64; 5] = [
    -1.0 / 20.0,
    9.0 / 20.0,
    47.0 / 60.0,
    -13.0 / 60.0,
    1.0 / 30.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    /// Values outside the array are zero.
    ZeroExtension,
}

impl FromStr for Boundary {
    type Err = LomacError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Boundary::Periodic),
            "zero" | "zero_extension" => Ok(Boundary::ZeroExtension),
            other => Err(LomacError::Config(format!(
                "unknown boundary policy `{other}` (expected `periodic` or `zero`)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpwindStencil {
    pub direction: Direction,
    pub coefficients: [f64; 5],
    /// Offset of the first coefficient relative to cell `j` for interface `j+1/2`.
    pub first_offset: isize,
    pub boundary: Boundary,
}

impl UpwindStencil {
    pub fn new(direction: Direction, boundary: Boundary) -> Self {
        let (coefficients, first_offset) = match direction {
            Direction::Plus => (PLUS_COEFFS, -2),
            Direction::Minus => (MINUS_COEFFS, -1),
        };
        Self {
            direction,
            coefficients,
            first_offset,
            boundary,
        }
    }
}

/// Interface values. For periodic data, `values[j]` is the flux at `j+1/2`
/// (`n` values). For zero extension, `values[k]` is the flux at `k-1/2`
/// (`n+1` values, including both domain ends).
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceFlux {
    pub values: Vec<f64>,
    pub boundary: Boundary,
}

pub fn reconstruct_interface(
    f: &[f64],
    direction: Direction,
    boundary: Boundary,
) -> Result<InterfaceFlux> {
    let n = f.len();
    let stencil = UpwindStencil::new(direction, boundary);
    let c = stencil.coefficients;
    let off = stencil.first_offset;
    match boundary {
        Boundary::Periodic => {
            if n < crate::grid::MIN_POINTS {
                return Err(LomacError::Sizing {
                    n,
                    min: crate::grid::MIN_POINTS,
                });
            }
            let ni = n as isize;
            let values = (0..ni)
                .map(|j| {
                    let mut s = 0.0;
                    for (m, cm) in c.iter().enumerate() {
                        let idx = (j + off + m as isize).rem_euclid(ni) as usize;
                        s += cm * f[idx];
                    }
                    s
                })
                .collect();
            Ok(InterfaceFlux { values, boundary })
        }
        Boundary::ZeroExtension => {
            if n < 5 {
                return Err(LomacError::Sizing { n, min: 5 });
            }
            let ni = n as isize;
            // Interface k - 1/2 is interface (k-1) + 1/2.
            let values = (0..=ni)
                .map(|k| {
                    let j = k - 1;
                    let mut s = 0.0;
                    for (m, cm) in c.iter().enumerate() {
                        let idx = j + off + m as isize;
                        if (0..ni).contains(&idx) {
                            s += cm * f[idx as usize];
                        }
                    }
                    s
                })
                .collect();
            Ok(InterfaceFlux { values, boundary })
        }
    }
}

/// `(F_{j+1/2} - F_{j-1/2}) / h` for every cell.
pub fn flux_difference(fhat: &InterfaceFlux, h: f64) -> Vec<f64> {
    let v = &fhat.values;
    match fhat.boundary {
        Boundary::Periodic => {
            let n = v.len();
            (0..n).map(|j| (v[j] - v[(j + n - 1) % n]) / h).collect()
        }
        Boundary::ZeroExtension => v.windows(2).map(|w| (w[1] - w[0]) / h).collect(),
    }
}

/// Upwind derivative `D^± u` in flux-difference form.
pub fn upwind_derivative(
    u: &[f64],
    direction: Direction,
    h: f64,
    boundary: Boundary,
) -> Result<Vec<f64>> {
    let fhat = reconstruct_interface(u, direction, boundary)?;
    Ok(flux_difference(&fhat, h))
}

/// Upwind derivative along the first axis of a row-major `n1 x n2` array
/// (index `i1 * n2 + i2`).
pub fn upwind_derivative_axis0(
    u: &[f64],
    n1: usize,
    n2: usize,
    direction: Direction,
    h: f64,
    boundary: Boundary,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n1 * n2];
    let mut line = vec![0.0; n1];
    for i2 in 0..n2 {
        for i1 in 0..n1 {
            line[i1] = u[i1 * n2 + i2];
        }
        let d = upwind_derivative(&line, direction, h, boundary)?;
        for i1 in 0..n1 {
            out[i1 * n2 + i2] = d[i1];
        }
    }
    Ok(out)
}

/// Upwind derivative along the second (contiguous) axis of a row-major array.
pub fn upwind_derivative_axis1(
    u: &[f64],
    n1: usize,
    n2: usize,
    direction: Direction,
    h: f64,
    boundary: Boundary,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n1 * n2);
    for row in u.chunks(n2).take(n1) {
        out.extend(upwind_derivative(row, direction, h, boundary)?);
    }
    Ok(out)
}
