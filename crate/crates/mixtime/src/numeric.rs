//! Small exact-integer helpers shared by the protocol and the oracle.
//!
//! Logarithm ceilings are computed with integer comparisons only, so the
//! same inputs give the same answers on every platform.

use num_bigint::BigUint;
use num_traits::One;

/// Base used when turning a node count into a token budget or threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogBase {
    Natural,
    Two,
    Ten,
}

/// `ceil(log2(n))` for `n >= 1`; zero for `n = 1`.
pub fn ceil_log2(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        64 - ((n - 1) as u64).leading_zeros() as u64
    }
}

/// `ceil(ln(n))` for `n >= 1`, decided by comparing `n` against exact
/// rational powers of a 40-digit truncation of `e`.
pub fn ceil_ln(n: usize) -> u64 {
    ceil_log(n, LogBase::Natural)
}

/// `ceil(log_base(n))` for `n >= 1`.
pub fn ceil_log(n: usize, base: LogBase) -> u64 {
    if n <= 1 {
        return 0;
    }
    match base {
        LogBase::Two => ceil_log2(n),
        LogBase::Ten => {
            let mut level = 0u64;
            let mut power = BigUint::one();
            let ten = BigUint::from(10u32);
            let n = BigUint::from(n);
            while power < n {
                power *= &ten;
                level += 1;
            }
            level
        }
        LogBase::Natural => {
            // e truncated below; e_num/e_den < e, and the gap (~1e-39) can
            // never straddle an integer n at the exponents reachable here.
            let e_num: BigUint = "2718281828459045235360287471352662497757"
                .parse()
                .expect("e digits");
            let e_den: BigUint = BigUint::from(10u32).pow(39);
            let n = BigUint::from(n);
            let mut level = 0u64;
            let mut num = BigUint::one();
            let mut den = BigUint::one();
            // smallest L with e^L >= n, i.e. e_num^L >= n * e_den^L
            while num < &n * &den {
                num *= &e_num;
                den *= &e_den;
                level += 1;
            }
            level
        }
    }
}
