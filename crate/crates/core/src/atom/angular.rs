//! Clebsch-Gordan coefficients for half-integer angular momenta.
//!
//! All quantum numbers are passed doubled (`j2 = 2j`, `m2 = 2m`) so that
//! half-integers stay exact.

fn factorial(n: i32) -> f64 {
    debug_assert!(n >= 0);
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// ⟨j1 m1; j2 m2 | j m⟩ via the Racah formula, doubled arguments.
pub fn clebsch_gordan(j1: i32, m1: i32, j2: i32, m2: i32, j: i32, m: i32) -> f64 {
    if m1 + m2 != m {
        return 0.0;
    }
    if m1.abs() > j1 || m2.abs() > j2 || m.abs() > j {
        return 0.0;
    }
    if j < (j1 - j2).abs() || j > j1 + j2 {
        return 0.0;
    }
    // every factorial argument below must be a non-negative integer
    if (j1 + j2 + j) % 2 != 0 || (j1 + m1) % 2 != 0 || (j2 + m2) % 2 != 0 || (j + m) % 2 != 0 {
        return 0.0;
    }
    let h = |x: i32| x / 2;
    let pre = ((j + 1) as f64 * factorial(h(j + j1 - j2)) * factorial(h(j - j1 + j2))
        * factorial(h(j1 + j2 - j))
        / factorial(h(j1 + j2 + j) + 1))
        .sqrt();
    let norm = (factorial(h(j + m))
        * factorial(h(j - m))
        * factorial(h(j1 - m1))
        * factorial(h(j1 + m1))
        * factorial(h(j2 - m2))
        * factorial(h(j2 + m2)))
    .sqrt();
    let mut sum = 0.0;
    for k in 0..=h(j1 + j2 + j) {
        let args = [
            k,
            h(j1 + j2 - j) - k,
            h(j1 - m1) - k,
            h(j2 + m2) - k,
            h(j - j2 + m1) + k,
            h(j - j1 - m2) + k,
        ];
        if args.iter().any(|&a| a < 0) {
            continue;
        }
        let denom: f64 = args.iter().map(|&a| factorial(a)).product();
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
    }
    pre * norm * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn textbook_values() {
        // ⟨1/2 1/2; 1/2 -1/2 | 1 0⟩ = 1/√2
        let v = clebsch_gordan(1, 1, 1, -1, 2, 0);
        assert!((v - 0.5f64.sqrt()).abs() < 1e-14);
        // ⟨1/2 1/2; 1/2 -1/2 | 0 0⟩ = 1/√2
        let v = clebsch_gordan(1, 1, 1, -1, 0, 0);
        assert!((v - 0.5f64.sqrt()).abs() < 1e-14);
        // stretched state
        assert!((clebsch_gordan(3, 3, 2, 2, 5, 5) - 1.0).abs() < 1e-14);
    }

    proptest! {
        // Σ_{m1,m2} ⟨j1 m1 j2 m2|j m⟩⟨j1 m1 j2 m2|j' m⟩ = δ_{jj'}
        #[test]
        fn orthonormal_columns(j1 in 0i32..5, j2 in 0i32..5, pick in 0usize..16) {
            let js: Vec<i32> = ((j1 - j2).abs()..=j1 + j2).step_by(2).collect();
            let j = js[pick % js.len()];
            for jp in &js {
                for m in (-j..=j).step_by(2) {
                    let mut s = 0.0;
                    for m1 in (-j1..=j1).step_by(2) {
                        let m2 = m - m1;
                        s += clebsch_gordan(j1, m1, j2, m2, j, m) * clebsch_gordan(j1, m1, j2, m2, *jp, m);
                    }
                    let expect = if *jp == j && m.abs() <= *jp { 1.0 } else { 0.0 };
                    prop_assert!((s - expect).abs() < 1e-12, "j1={j1} j2={j2} j={j} j'={jp} m={m}: {s}");
                }
            }
        }
    }
}
