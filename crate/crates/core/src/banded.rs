//! Real banded LU factorization with partial pivoting.
//!
//! Storage follows the LAPACK `gbtrf` layout: entry `A[i][j]` lives at
//! `ab[(kl + ku + i - j) + j * ldab]` with `ldab = 2·kl + ku + 1`, leaving
//! `kl` extra superdiagonals for pivoting fill-in.

use std::ops::{DivAssign, Mul, SubAssign};

#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            ab: vec![0.0; (2 * kl + ku + 1) * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn ldab(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        self.kl + self.ku + i - j + j * self.ldab()
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku >= j && j + self.kl >= i
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.offset(i, j)]
        } else {
            0.0
        }
    }

    /// Sets an entry inside the declared band. Panics outside it.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let o = self.offset(i, j);
        self.ab[o] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.ab.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `y = A x`.
    pub fn apply<T>(&self, x: &[T]) -> Vec<T>
    where
        T: Copy + Default + Mul<f64, Output = T> + std::ops::AddAssign,
    {
        assert_eq!(x.len(), self.n);
        let mut y = vec![T::default(); self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for (j, xj) in x.iter().enumerate().take(hi + 1).skip(lo) {
                *yi += *xj * self.get(i, j);
            }
        }
        y
    }

    /// Factorizes in place. Fails with the column index of a vanishing pivot.
    pub fn factorize(mut self) -> Result<BandLu, usize> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let tiny = self.max_abs() * f64::EPSILON * n as f64;
        let mut piv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = 0;
            let mut best = self.ab[self.offset(j, j)].abs();
            for r in 1..=km {
                let v = self.ab[self.offset(j + r, j)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            piv[j] = j + p;
            if !(best > tiny) {
                return Err(j);
            }
            ju = ju.max((j + ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let a = self.offset(j, c);
                    let b = self.offset(j + p, c);
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[self.offset(j, j)];
            for r in 1..=km {
                let o = self.offset(j + r, j);
                self.ab[o] /= pivot;
            }
            for c in j + 1..=ju {
                let ujc = self.ab[self.offset(j, c)];
                if ujc == 0.0 {
                    continue;
                }
                for r in 1..=km {
                    let l = self.ab[self.offset(j + r, j)];
                    let o = self.offset(j + r, c);
                    self.ab[o] -= l * ujc;
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn n(&self) -> usize {
        self.m.n
    }

    /// Solves `A x = b` in place for any scalar type that a real factor can scale.
    pub fn solve_in_place<T>(&self, b: &mut [T])
    where
        T: Copy + SubAssign + Mul<f64, Output = T> + DivAssign<f64>,
    {
        let m = &self.m;
        let n = m.n;
        assert_eq!(b.len(), n);
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = m.kl.min(n - 1 - j);
            let bj = b[j];
            for r in 1..=km {
                b[j + r] -= bj * m.ab[m.offset(j + r, j)];
            }
        }
        let band = m.kl + m.ku;
        for j in (0..n).rev() {
            b[j] /= m.ab[m.offset(j, j)];
            let bj = b[j];
            for i in j.saturating_sub(band)..j {
                b[i] -= bj * m.ab[m.offset(i, j)];
            }
        }
    }
}
