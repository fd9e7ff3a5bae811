mod common;

use aby3_core::{simulate, ArithShare, Coeffs, Error, RingTensor, SimOptions};
use common::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn share_and_reveal_round_trip() {
    let v = [1.5, -2.25, 0.0, 1234.5];
    for owner in [P0, P1, P2] {
        let got = run(|s| {
            let x = s.share_from(owner, &enc(&[4], &v))?;
            Ok(s.reveal(&x)?.decode(&s.codec()))
        });
        assert_eq!(got, v);
    }
}

#[test]
fn add_and_public_ops_are_exact() {
    let a = [1.0, -3.5, 7.25];
    let b = [0.5, 2.0, -7.25];
    let got = run(|s| {
        let x = s.share_from(P0, &enc(&[3], &a))?;
        let y = s.share_from(P2, &enc(&[3], &b))?;
        let sum = x.add(&y)?;
        let diff = x.sub(&y)?.add_public(&enc(&[3], &[1.0, 1.0, 1.0]))?;
        let k = x.mul_public_int(-3);
        let out = s.reveal_many(&[&sum, &diff, &k])?;
        Ok(out.iter().map(|t| t.decode(&s.codec())).collect::<Vec<_>>())
    });
    assert_eq!(got[0], vec![1.5, -1.5, 0.0]);
    assert_eq!(got[1], vec![1.5, -4.5, 15.5]);
    assert_eq!(got[2], vec![-3.0, 10.5, -21.75]);
}

#[test]
fn mul_is_within_one_ulp_on_1000_pairs() {
    let mut r = rng(1);
    let a = on_grid(&uniform(&mut r, 1000, -100.0, 100.0));
    let b = on_grid(&uniform(&mut r, 1000, -100.0, 100.0));
    let got = run(|s| {
        let x = s.share_from(P0, &enc(&[1000], &a))?;
        let y = s.share_from(P1, &enc(&[1000], &b))?;
        let z = s.mul(&x, &y)?;
        Ok(s.reveal(&z)?.decode(&s.codec()))
    });
    let want: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    assert!(max_abs_diff(&got, &want) <= ulp());
}

#[test]
fn mul_of_integer_by_fixed_point_is_exact() {
    let got = run(|s| {
        let x = s.share_from(P0, &RingTensor::from_i64(&[3], &[3, -2, 0])?)?;
        let y = s.share_from(P1, &enc(&[3], &[0.125, 1.5, 9.0]))?;
        let z = s.mul(&x, &y)?;
        Ok((z.is_scaled(), s.reveal(&z)?.decode(&s.codec())))
    });
    assert_eq!(got, (true, vec![0.375, -3.0, 0.0]));
}

#[test]
fn matmul_error_is_one_ulp_per_entry() {
    let (m, k, n) = (7, 33, 3);
    let mut r = rng(2);
    let a = on_grid(&uniform(&mut r, m * k, -4.0, 4.0));
    let b = on_grid(&uniform(&mut r, k * n, -4.0, 4.0));
    let got = run(|s| {
        let x = s.share_from(P0, &enc(&[m, k], &a))?;
        let y = s.share_from(P2, &enc(&[k, n], &b))?;
        let z = s.matmul(&x, &y)?;
        Ok(s.reveal(&z)?.decode(&s.codec()))
    });
    let mut want = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            want[i * n + j] = (0..k).map(|t| a[i * k + t] * b[t * n + j]).sum();
        }
    }
    assert!(max_abs_diff(&got, &want) <= ulp());
}

#[test]
fn round_counts() {
    let report = simulate(&SimOptions::default(), |s| {
        let mut counts = Vec::new();
        let mut mark = s.stats().rounds;
        let mut tick = |s: &aby3_core::Session, counts: &mut Vec<u64>| {
            counts.push(s.stats().rounds - mark);
            mark = s.stats().rounds;
        };
        let x = s.share_from(P0, &enc(&[4, 4], &[0.5; 16]))?;
        tick(s, &mut counts);
        let _ = s.reveal(&x)?;
        tick(s, &mut counts);
        let _ = s.mul(&x, &x)?;
        tick(s, &mut counts);
        let _ = s.matmul(&x, &x)?;
        tick(s, &mut counts);
        let ints = s.public_share(&RingTensor::from_i64(&[4, 4], &[2; 16])?);
        let _ = s.mul(&x, &ints)?;
        tick(s, &mut counts);
        let _ = s.truncate(&x)?;
        tick(s, &mut counts);
        let _ = s.linear_combination(
            &[(&x, Coeffs::Scalar(0.3)), (&x, Coeffs::Scalar(-1.0))],
            None,
            24,
        )?;
        tick(s, &mut counts);
        let _ = s.mul_many(&[(&x, &x), (&x, &ints)])?;
        tick(s, &mut counts);
        Ok(counts)
    })
    .unwrap();
    // share, reveal, mul, matmul, unscaled mul, truncate, linear combination, batch
    assert_eq!(report.outputs[0], vec![1, 1, 2, 2, 1, 2, 2, 2]);
    assert!(report.outputs.iter().all(|o| o == &report.outputs[0]));
}

#[test]
fn truncation_is_accurate_on_10k_values() {
    let mut r = rng(3);
    let mut words: Vec<i64> = (0..10_000)
        .map(|_| r.random_range(-(1i64 << 60)..(1i64 << 60)))
        .collect();
    // a few values that are exact multiples must come out exact
    for (k, w) in words.iter_mut().take(100).enumerate() {
        *w = (k as i64 - 50) << 20;
    }
    for bits in [1u32, 16, 20, 40] {
        let got = run(|s| {
            let x = s.share_from(P1, &RingTensor::from_i64(&[words.len()], &words)?)?;
            let t = s.truncate_by(&x, bits)?;
            Ok(s.reveal(&t)?.data().to_vec())
        });
        for (k, (&w, &g)) in words.iter().zip(&got).enumerate() {
            let want = w >> bits;
            let diff = (g as i64).wrapping_sub(want);
            assert!(
                diff.abs() <= 1,
                "bits {bits}: {w} -> {} vs {want}",
                g as i64
            );
            if k < 100 && bits <= 20 {
                assert_eq!(diff, 0, "multiple of 2^{bits} must truncate exactly");
            }
        }
    }
}

#[test]
fn linear_combination_matches_plain() {
    let a = on_grid(&[1.0, -2.0, 3.5, 0.25]);
    let b = on_grid(&[0.5, 0.5, -1.0, 8.0]);
    let got = run(|s| {
        let x = s.share_from(P0, &enc(&[4], &a))?;
        let y = s.share_from(P1, &enc(&[4], &b))?;
        let z = s.linear_combination(
            &[
                (&x, Coeffs::Scalar(0.1)),
                (&y, Coeffs::Elementwise(vec![1.0, -1.0, 0.0, 0.5])),
            ],
            Some(&Coeffs::Scalar(2.0)),
            24,
        )?;
        Ok(s.reveal(&z)?.decode(&s.codec()))
    });
    let want: Vec<f64> = (0..4)
        .map(|i| 0.1 * a[i] + [1.0, -1.0, 0.0, 0.5][i] * b[i] + 2.0)
        .collect();
    assert!(max_abs_diff(&got, &want) <= 2.0 * ulp());
}

#[test]
fn inconsistent_replica_is_caught_by_checked_reveal() {
    let res = simulate(&SimOptions::default(), |s| {
        let x = s.share_from(P0, &enc(&[2], &[1.0, 2.0]))?;
        let x = if s.party() == P1 {
            let mut second = x.second().clone();
            second.data_mut()[1] ^= 1;
            ArithShare::from_parts(P1, x.first().clone(), second)?
        } else {
            x
        };
        s.reveal(&x)
    });
    assert!(matches!(res, Err(Error::Integrity(_))), "{:?}", res.err());

    // with the check off the tampered value is silently accepted
    let opts = SimOptions {
        checked_reveal: false,
        ..SimOptions::default()
    };
    let res = simulate(&opts, |s| {
        let x = s.share_from(P0, &enc(&[1], &[1.0]))?;
        let x = if s.party() == P1 {
            let mut second = x.second().clone();
            second.data_mut()[0] ^= 1;
            ArithShare::from_parts(P1, x.first().clone(), second)?
        } else {
            x
        };
        s.reveal(&x)
    })
    .unwrap();
    // P1 opens with its own tampered component, P2 never sees it
    assert_eq!(res.outputs[2], enc(&[1], &[1.0]));
    assert_ne!(res.outputs[1], res.outputs[2]);
}

#[test]
fn scale_mismatch_is_rejected() {
    let res = simulate(&SimOptions::default(), |s| {
        let x = s.share_from(P0, &enc(&[2], &[1.0, 2.0]))?;
        let k = s.public_share(&RingTensor::from_i64(&[2], &[1, 2])?);
        x.add(&k)
    });
    assert!(matches!(res, Err(Error::ScaleMismatch)));
}

/// Chi-square statistic of the top 4 bits of `words` against uniform.
fn chi_square_top_nibble(words: &[u64]) -> f64 {
    let mut hist = [0f64; 16];
    for w in words {
        hist[(w >> 60) as usize] += 1.0;
    }
    let e = words.len() as f64 / 16.0;
    hist.iter().map(|o| (o - e) * (o - e) / e).sum()
}

#[test]
fn views_of_a_constant_secret_look_uniform() {
    // 15 degrees of freedom; 37.7 is the 0.999 quantile
    const LIMIT: f64 = 37.7;
    let n = 8000;
    let views = |secret: f64| {
        simulate(&SimOptions::default(), |s| {
            let x = s.share_from(P0, &enc(&[n], &vec![secret; n]))?;
            let k = s.public_share(&RingTensor::from_i64(&[n], &vec![5; n])?);
            let plain = s.mul(&x, &k)?;
            let fused = s.mul(&x, &x)?;
            Ok([
                x.first().data().to_vec(),
                x.second().data().to_vec(),
                plain.first().data().to_vec(),
                plain.second().data().to_vec(),
                fused.first().data().to_vec(),
                fused.second().data().to_vec(),
            ])
        })
        .unwrap()
        .outputs
    };
    let a = views(3.0);
    let b = views(-1.75);
    for p in [1usize, 2] {
        for (k, view) in a[p].iter().enumerate() {
            // P1's first component of a truncated product is the negated,
            // shifted mask; it is not uniform but never touches the secret
            if p == 1 && k == 4 {
                assert_eq!(view, &b[p][k]);
                continue;
            }
            let chi = chi_square_top_nibble(view);
            assert!(chi < LIMIT, "P{p} view {k} chi-square {chi}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reveal_inverts_share_for_any_words(words in prop::collection::vec(any::<u64>(), 1..40), owner in 0usize..3) {
        let owner = aby3_core::PartyId::new(owner).unwrap();
        let t = RingTensor::new(vec![words.len()], words.clone(), false).unwrap();
        let got = run(|s| {
            let x = s.share_from(owner, &t)?;
            Ok(s.reveal(&x)?.data().to_vec())
        });
        prop_assert_eq!(got, words);
    }

    #[test]
    fn shares_are_replicated_and_sum_to_secret(words in prop::collection::vec(any::<u64>(), 1..20)) {
        let t = RingTensor::new(vec![words.len()], words.clone(), false).unwrap();
        let out = simulate(&SimOptions::default(), |s| {
            let x = s.share_from(P2, &t)?;
            Ok((x.first().data().to_vec(), x.second().data().to_vec()))
        }).unwrap().outputs;
        for i in 0..3 {
            prop_assert_eq!(&out[i].1, &out[(i + 1) % 3].0);
        }
        for k in 0..words.len() {
            let sum = out[0].0[k].wrapping_add(out[1].0[k]).wrapping_add(out[2].0[k]);
            prop_assert_eq!(sum, words[k]);
        }
    }

    #[test]
    fn addition_is_homomorphic(a in prop::collection::vec(any::<u64>(), 8), b in prop::collection::vec(any::<u64>(), 8)) {
        let ta = RingTensor::new(vec![8], a.clone(), false).unwrap();
        let tb = RingTensor::new(vec![8], b.clone(), false).unwrap();
        let got = run(|s| {
            let x = s.share_from(P0, &ta)?;
            let y = s.share_from(P1, &tb)?;
            Ok(s.reveal(&x.add(&y)?.neg())?.data().to_vec())
        });
        let want: Vec<u64> = a.iter().zip(&b).map(|(x, y)| x.wrapping_add(*y).wrapping_neg()).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn fixed_point_mul_stays_within_one_ulp(a in -1000.0f64..1000.0, b in -1000.0f64..1000.0) {
        let (a, b) = (on_grid(&[a])[0], on_grid(&[b])[0]);
        let got = run(|s| {
            let x = s.share_from(P0, &enc(&[1], &[a]))?;
            let y = s.share_from(P2, &enc(&[1], &[b]))?;
            let z = s.mul(&x, &y)?;
            Ok(s.reveal(&z)?.decode(&s.codec()))
        });
        prop_assert!((got[0] - a * b).abs() <= ulp());
    }
}
