//! Small dense complex-matrix helpers for 2x2 and 4x4 gate algebra.
//!
//! Matrices are row-major `Vec<Complex64>` of size `dim * dim`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> [Complex64; 4] {
        match self {
            Pauli::I => [ONE, ZERO, ZERO, ONE],
            Pauli::X => [ZERO, ONE, ONE, ZERO],
            Pauli::Y => [ZERO, -I, I, ZERO],
            Pauli::Z => [ONE, ZERO, ZERO, -ONE],
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_symbol(c: char) -> Option<Pauli> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

/// The 15 non-identity two-qubit Pauli strings in lexicographic order over
/// `I < X < Y < Z`; the first letter acts on the first target.
pub fn two_qubit_paulis() -> Vec<[Pauli; 2]> {
    let mut out = Vec::with_capacity(15);
    for a in Pauli::ALL {
        for b in Pauli::ALL {
            if a != Pauli::I || b != Pauli::I {
                out.push([a, b]);
            }
        }
    }
    out
}

/// 4x4 matrix of `p[0]` on local bit 0 and `p[1]` on local bit 1.
pub fn pauli_string_matrix(p: [Pauli; 2]) -> Vec<Complex64> {
    let m0 = p[0].matrix();
    let m1 = p[1].matrix();
    let mut out = vec![ZERO; 16];
    for r in 0..4 {
        for c in 0..4 {
            out[r * 4 + c] = m1[(r >> 1) * 2 + (c >> 1)] * m0[(r & 1) * 2 + (c & 1)];
        }
    }
    out
}

pub fn identity(dim: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; dim * dim];
    for i in 0..dim {
        out[i * dim + i] = ONE;
    }
    out
}

pub fn matmul(a: &[Complex64], b: &[Complex64], dim: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let aik = a[i * dim + k];
            if aik == ZERO {
                continue;
            }
            for j in 0..dim {
                out[i * dim + j] += aik * b[k * dim + j];
            }
        }
    }
    out
}

pub fn trace(a: &[Complex64], dim: usize) -> Complex64 {
    (0..dim).map(|i| a[i * dim + i]).sum()
}

/// Tr[a b] without forming the product.
pub fn trace_of_product(a: &[Complex64], b: &[Complex64], dim: usize) -> Complex64 {
    let mut s = ZERO;
    for i in 0..dim {
        for k in 0..dim {
            s += a[i * dim + k] * b[k * dim + i];
        }
    }
    s
}

pub fn scale(a: &[Complex64], s: Complex64) -> Vec<Complex64> {
    a.iter().map(|x| x * s).collect()
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `cos(φ) I − i sin(φ) P` for an involutory `P`.
pub fn involutory_exp(p: &[Complex64], dim: usize, phi: f64) -> Vec<Complex64> {
    let (s, c) = phi.sin_cos();
    let mut out = scale(p, Complex64::new(0.0, -s));
    for i in 0..dim {
        out[i * dim + i] += c;
    }
    out
}

/// Matrix exponential by scaling and squaring with a Taylor kernel.
pub fn expm(a: &[Complex64], dim: usize) -> Vec<Complex64> {
    let norm: f64 = (0..dim)
        .map(|i| (0..dim).map(|j| a[i * dim + j].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut s = 1.0;
    while norm * s > 0.25 {
        s *= 0.5;
        squarings += 1;
    }
    let scaled = scale(a, Complex64::new(s, 0.0));
    let mut result = identity(dim);
    let mut term = identity(dim);
    for k in 1..=18 {
        term = scale(&matmul(&term, &scaled, dim), Complex64::new(1.0 / k as f64, 0.0));
        for (r, t) in result.iter_mut().zip(&term) {
            *r += t;
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result, dim);
    }
    result
}

pub fn is_involutory(p: &[Complex64], dim: usize, tol: f64) -> bool {
    max_abs_diff(&matmul(p, p, dim), &identity(dim)) <= tol
}

pub fn is_hermitian(p: &[Complex64], dim: usize, tol: f64) -> bool {
    (0..dim).all(|i| (0..dim).all(|j| (p[i * dim + j] - p[j * dim + i].conj()).norm() <= tol))
}

/// Haar-random unitary via Gram–Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<Complex64> {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        for c in &cols {
            let proj: Complex64 = c.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= proj * ci;
            }
        }
        let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if n < 1e-8 {
            continue;
        }
        cols.push(v.into_iter().map(|x| x / n).collect());
    }
    let mut out = vec![ZERO; dim * dim];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..dim {
            out[i * dim + j] = c[i];
        }
    }
    out
}
