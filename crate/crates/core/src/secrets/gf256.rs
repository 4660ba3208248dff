//! Arithmetic in GF(2^8) modulo x^8 + x^4 + x^3 + x + 1 (0x11B).

const POLY: u16 = 0x11B;

const fn build_tables() -> ([u8; 256], [u8; 256]) {
    // 0x03 generates the multiplicative group for this polynomial.
    let mut exp = [0u8; 256];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        let mut next = (x << 1) ^ x;
        if next & 0x100 != 0 {
            next ^= POLY;
        }
        x = next;
        i += 1;
    }
    exp[255] = exp[0];
    (exp, log)
}

const TABLES: ([u8; 256], [u8; 256]) = build_tables();
const EXP: [u8; 256] = TABLES.0;
const LOG: [u8; 256] = TABLES.1;

#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    let s = LOG[a as usize] as usize + LOG[b as usize] as usize;
    EXP[s % 255]
}

/// Multiplicative inverse; `a` must be nonzero.
#[inline]
pub fn inv(a: u8) -> u8 {
    assert!(a != 0, "zero has no inverse in GF(256)");
    EXP[(255 - LOG[a as usize] as usize) % 255]
}

#[inline]
pub fn div(a: u8, b: u8) -> u8 {
    mul(a, inv(b))
}

/// Evaluates `coeffs[0] + coeffs[1] x + ...` at `x`.
pub fn eval(coeffs: &[u8], x: u8) -> u8 {
    coeffs.iter().rev().fold(0u8, |acc, &c| add(mul(acc, x), c))
}

/// Lagrange interpolation of the points `(xs[i], ys[i])` evaluated at `at`.
pub fn interpolate(xs: &[u8], ys: &[u8], at: u8) -> u8 {
    let mut acc = 0u8;
    for (i, (&xi, &yi)) in xs.iter().zip(ys).enumerate() {
        let mut num = 1u8;
        let mut den = 1u8;
        for (j, &xj) in xs.iter().enumerate() {
            if i != j {
                num = mul(num, add(at, xj));
                den = mul(den, add(xi, xj));
            }
        }
        acc = add(acc, mul(yi, div(num, den)));
    }
    acc
}
