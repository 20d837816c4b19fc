//! Baillie-PSW probable-prime test: trial division, a strong Fermat test to
//! base 2, then a strong Lucas test with Selfridge parameters.

use rug::Integer;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Returns true if `n` is a Baillie-PSW probable prime.
///
/// No composite passing this test is known; for inputs below 2^64 the test
/// is exact.
pub fn is_probable_prime(n: &Integer) -> bool {
    if *n < 2 {
        return false;
    }
    for &p in SMALL_PRIMES.iter() {
        if *n == p {
            return true;
        }
        if n.is_divisible_u(p) {
            return false;
        }
    }
    strong_fermat_base2(n) && strong_lucas(n)
}

fn strong_fermat_base2(n: &Integer) -> bool {
    let n_minus_1 = Integer::from(n - 1u32);
    let s = n_minus_1.find_one(0).unwrap_or(0);
    let d = Integer::from(&n_minus_1 >> s);
    let mut x = Integer::from(2)
        .pow_mod(&d, n)
        .expect("non-negative exponent");
    if x == 1 || x == n_minus_1 {
        return true;
    }
    for _ in 1..s {
        x.square_mut();
        x %= n;
        if x == n_minus_1 {
            return true;
        }
        if x == 1 {
            return false;
        }
    }
    false
}

/// Selfridge method A: first D in 5, -7, 9, -11, ... with Jacobi(D/n) = -1.
/// Must not be called on perfect squares.
fn selfridge_d(n: &Integer) -> Option<i64> {
    let mut d: i64 = 5;
    loop {
        let j = Integer::from(d).jacobi(n);
        if j == -1 {
            return Some(d);
        }
        if j == 0 && Integer::from(d).abs() != *n {
            return None;
        }
        d = if d > 0 { -(d + 2) } else { -d + 2 };
    }
}

fn half_mod(mut x: Integer, n: &Integer) -> Integer {
    if x.is_odd() {
        x += n;
    }
    x >>= 1;
    x % n
}

fn strong_lucas(n: &Integer) -> bool {
    if n.is_perfect_square() {
        return false;
    }
    let d = match selfridge_d(n) {
        Some(d) => d,
        None => return false,
    };
    let p = Integer::from(1);
    let q = Integer::from((1 - d) / 4);
    let d_big = Integer::from(d);

    let n_plus_1 = Integer::from(n + 1u32);
    let s = n_plus_1.find_one(0).unwrap_or(0);
    let k = Integer::from(&n_plus_1 >> s);

    // U_1 = 1, V_1 = P, Q^1 = Q
    let mut u = Integer::from(1);
    let mut v = p.clone();
    let mut qk = q.pmod(n);
    let q_mod = qk.clone();
    let bits = k.significant_bits();
    for i in (0..bits - 1).rev() {
        // doubling
        u = Integer::from(&u * &v) % n;
        v = (Integer::from(v.square_ref()) - Integer::from(&qk * 2u32)).pmod(n);
        qk = Integer::from(qk.square_ref()) % n;
        if k.get_bit(i) {
            let u_next = half_mod((Integer::from(&p * &u) + &v).pmod(n), n);
            let v_next = half_mod((Integer::from(&d_big * &u) + Integer::from(&p * &v)).pmod(n), n);
            u = u_next;
            v = v_next;
            qk = Integer::from(&qk * &q_mod) % n;
        }
    }
    if u == 0 || v == 0 {
        return true;
    }
    for _ in 1..s {
        v = (Integer::from(v.square_ref()) - Integer::from(&qk * 2u32)).pmod(n);
        if v == 0 {
            return true;
        }
        qk = Integer::from(qk.square_ref()) % n;
    }
    false
}

trait PMod {
    fn pmod(self, n: &Integer) -> Integer;
}

impl PMod for Integer {
    fn pmod(self, n: &Integer) -> Integer {
        let mut r = self % n;
        if r < 0 {
            r += n;
        }
        r
    }
}
