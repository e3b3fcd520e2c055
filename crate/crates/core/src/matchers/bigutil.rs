use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

/// `floor(log2 n)` for `n >= 1`, and 0 for `n == 0`.
pub fn floor_log2(n: &BigUint) -> usize {
    if n.is_zero() {
        0
    } else {
        (n.bits() - 1) as usize
    }
}

/// log2 of a big integer as f64 without overflow.
pub fn log2_big(n: &BigUint) -> f64 {
    if n.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = n.bits();
    let shift = bits.saturating_sub(60);
    let top = (n >> shift).to_f64().unwrap();
    top.log2() + shift as f64
}

/// `num / 2^den_bits` as f64 without overflow for huge operands.
pub fn ratio_pow2(num: &BigUint, den_bits: usize) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    (log2_big(num) - den_bits as f64).exp2()
}

/// `num / den` as f64.
pub fn ratio(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    (log2_big(num) - log2_big(den)).exp2()
}

pub fn bits_to_big(bits: &[bool]) -> BigUint {
    let mut v = BigUint::zero();
    for &b in bits {
        v <<= 1;
        if b {
            v += 1u32;
        }
    }
    v
}

pub fn big_to_bits(v: &BigUint, n: usize) -> Vec<bool> {
    (0..n).map(|i| v.bit((n - 1 - i) as u64)).collect()
}

pub fn pow2(k: usize) -> BigUint {
    BigUint::one() << k
}

/// Multinomial coefficient `(sum n)! / prod n_i!`.
pub fn multinomial(counts: &[usize]) -> BigUint {
    let mut acc = BigUint::one();
    let mut total = 0usize;
    for &c in counts {
        for j in 1..=c {
            total += 1;
            acc *= total;
            acc /= j;
        }
    }
    acc
}
