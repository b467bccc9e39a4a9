//! Finite fields F_{p^m} in a fixed polynomial basis.
//!
//! An element is stored as its index `sum c_j p^j`, where `c_j` are the
//! coordinates in the basis `1, x, ..., x^{m-1}` of `F_p[x]/(f)`. The modulus
//! `f` is the first monic primitive polynomial in lexicographic order of its
//! coefficient vector, so the encoding is reproducible for every `(p, m)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FiniteField {
    p: u32,
    m: u32,
    q: u32,
    modulus: Vec<u32>,
    exp: Vec<u32>,
    log: Vec<u32>,
}

pub(crate) fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

impl FiniteField {
    pub fn new(p: u32, m: u32) -> Result<Self> {
        if !is_prime(p) || p == 2 {
            return Err(Error::InvalidRing(format!("p = {p} must be an odd prime")));
        }
        if m == 0 {
            return Err(Error::InvalidRing("extension degree must be at least 1".into()));
        }
        let q = (p as u64).checked_pow(m).filter(|&q| q <= 1 << 20).ok_or_else(|| {
            Error::InvalidRing(format!("field of size {p}^{m} is too large"))
        })? as u32;
        let mut tail = vec![0u32; m as usize];
        loop {
            let mut modulus = tail.clone();
            modulus.push(1);
            if let Some((exp, log)) = power_tables(p, &modulus, q) {
                return Ok(FiniteField { p, m, q, modulus, exp, log });
            }
            // next tail in lexicographic order (c_0 fastest)
            let mut j = 0;
            loop {
                if j == tail.len() {
                    unreachable!("every finite field has a primitive polynomial");
                }
                tail[j] += 1;
                if tail[j] < p {
                    break;
                }
                tail[j] = 0;
                j += 1;
            }
        }
    }

    pub fn p(&self) -> u32 {
        self.p
    }
    pub fn m(&self) -> u32 {
        self.m
    }
    pub fn order(&self) -> u32 {
        self.q
    }

    /// Coefficients of the modulus, constant term first (monic, length m+1).
    pub fn modulus(&self) -> &[u32] {
        &self.modulus
    }

    /// The modulus as a human-readable polynomial in `x`.
    pub fn modulus_string(&self) -> String {
        let mut parts = Vec::new();
        for (j, &c) in self.modulus.iter().enumerate().rev() {
            if c == 0 {
                continue;
            }
            let mono = match j {
                0 => String::new(),
                1 => "x".to_string(),
                _ => format!("x^{j}"),
            };
            parts.push(match (c, j) {
                (_, 0) => c.to_string(),
                (1, _) => mono,
                _ => format!("{c}*{mono}"),
            });
        }
        parts.join(" + ")
    }

    pub fn add(&self, a: u32, b: u32) -> u32 {
        if self.m == 1 {
            return (a + b) % self.p;
        }
        let (mut a, mut b, mut r, mut pw) = (a, b, 0, 1);
        while a > 0 || b > 0 {
            r += ((a % self.p + b % self.p) % self.p) * pw;
            a /= self.p;
            b /= self.p;
            pw *= self.p;
        }
        r
    }

    pub fn neg(&self, a: u32) -> u32 {
        if self.m == 1 {
            return (self.p - a) % self.p;
        }
        let (mut a, mut r, mut pw) = (a, 0, 1);
        while a > 0 {
            r += ((self.p - a % self.p) % self.p) * pw;
            a /= self.p;
            pw *= self.p;
        }
        r
    }

    pub fn sub(&self, a: u32, b: u32) -> u32 {
        self.add(a, self.neg(b))
    }

    pub fn mul(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            return 0;
        }
        let s = self.log[a as usize] + self.log[b as usize];
        self.exp[(s % (self.q - 1)) as usize]
    }

    pub fn inv(&self, a: u32) -> Option<u32> {
        if a == 0 {
            return None;
        }
        let l = self.log[a as usize];
        Some(self.exp[((self.q - 1 - l) % (self.q - 1)) as usize])
    }

    /// Image of an integer under `Z -> F_p -> F_q`.
    pub fn from_int(&self, n: i64) -> u32 {
        n.rem_euclid(self.p as i64) as u32
    }

    /// The primitive element `x`, generating the multiplicative group.
    pub fn generator(&self) -> u32 {
        self.exp[1 % (self.q - 1) as usize]
    }

    pub fn contains(&self, a: u32) -> bool {
        a < self.q
    }
}

/// Builds `exp`/`log` tables for `x` modulo `modulus`, or `None` if `x` does
/// not generate a cyclic group of order `q - 1` (then the modulus is not
/// primitive, and possibly not even irreducible).
fn power_tables(p: u32, modulus: &[u32], q: u32) -> Option<(Vec<u32>, Vec<u32>)> {
    let m = modulus.len() - 1;
    let encode = |c: &[u32]| c.iter().rev().fold(0u32, |acc, &d| acc * p + d);
    let mut cur = vec![0u32; m];
    cur[0] = 1;
    let mut exp = Vec::with_capacity((q - 1) as usize);
    let mut log = vec![u32::MAX; q as usize];
    for j in 0..q - 1 {
        let idx = encode(&cur);
        if log[idx as usize] != u32::MAX || idx == 0 {
            return None;
        }
        log[idx as usize] = j;
        exp.push(idx);
        // cur <- x * cur mod modulus
        let top = cur[m - 1];
        for t in (1..m).rev() {
            cur[t] = cur[t - 1];
        }
        cur[0] = 0;
        for t in 0..m {
            cur[t] = (cur[t] + (p - modulus[t]) * top) % p;
        }
    }
    if encode(&cur) != 1 {
        return None;
    }
    Some((exp, log))
}
