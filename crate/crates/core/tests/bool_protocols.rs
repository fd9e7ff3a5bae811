mod common;

use aby3_core::{simulate, BoolShare, RingTensor, SimOptions};
use common::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn a2b_recovers_1000_random_words() {
    let mut r = rng(10);
    let words: Vec<i64> = (0..1000).map(|_| r.random()).collect();
    let got = run(|s| {
        let x = s.share_from(P1, &RingTensor::from_i64(&[1000], &words)?)?;
        let before = s.stats().rounds;
        let b = s.a2b(&x)?;
        let rounds = s.stats().rounds - before;
        Ok((rounds, s.reveal_bool(&b)?.data().to_vec()))
    });
    assert_eq!(got.0, 8);
    let want: Vec<u64> = words.iter().map(|&w| w as u64).collect();
    assert_eq!(got.1, want);
}

#[test]
fn msb_is_the_sign() {
    let vals = [0i64, 1, -1, i64::MAX, i64::MIN, 1 << 40, -(1 << 40)];
    let got = run(|s| {
        let x = s.share_from(P0, &RingTensor::from_i64(&[vals.len()], &vals)?)?;
        let b = s.msb(&x)?;
        Ok(s.reveal_bool(&b)?.data().to_vec())
    });
    let want: Vec<u64> = vals.iter().map(|&v| (v < 0) as u64).collect();
    assert_eq!(got, want);
}

#[test]
fn lt_const_examples_at_and_around_points() {
    let u = ulp();
    let xs = [
        -5.0 - u,
        -5.0,
        -5.0 + u,
        0.0,
        2.5 - u,
        2.5,
        2.5 + u,
        -0.5,
        0.5 - u,
        7.99,
    ];
    let points = [-5.0, -0.5, 0.5, 2.5];
    let got = run(|s| {
        let x = s.share_from(P2, &enc(&[xs.len()], &xs))?;
        let bs = s.lt_const_many(&x, &points)?;
        let mut out = Vec::new();
        for b in &bs {
            out.push(s.reveal_bool(b)?.data().to_vec());
        }
        Ok(out)
    });
    for (j, &p) in points.iter().enumerate() {
        let want: Vec<u64> = xs.iter().map(|&x| (x < p) as u64).collect();
        assert_eq!(got[j], want, "point {p}");
    }
}

#[test]
fn lt_const_rounds_up_off_grid_points() {
    // 0.1 is not representable; x < 0.1 must hold exactly for grid values
    let c = codec();
    let below = c.decode(c.encode(0.1).unwrap());
    let xs = on_grid(&[below, below + ulp(), 0.1 - ulp()]);
    let got = run(|s| {
        let x = s.share_from(P0, &enc(&[3], &xs))?;
        let b = s.lt_const(&x, 0.1)?;
        Ok(s.reveal_bool(&b)?.data().to_vec())
    });
    let want: Vec<u64> = xs.iter().map(|&x| (x < 0.1) as u64).collect();
    assert_eq!(got, want);
}

#[test]
fn inject_on_1000_random_bits_and_values() {
    let mut r = rng(11);
    let bits: Vec<i64> = (0..1000).map(|_| r.random_range(0..2)).collect();
    let vals = on_grid(&uniform(&mut r, 1000, -50.0, 50.0));
    let got = run(|s| {
        let x = s.share_from(P0, &RingTensor::from_i64(&[1000], &bits)?)?;
        let b = s.a2b(&x)?.extract_bit(0);
        let y = s.share_from(P1, &enc(&[1000], &vals))?;
        let before = s.stats().rounds;
        let out = s.inject_many(&[&b, &b], &[Some(&y), None])?;
        let rounds = s.stats().rounds - before;
        let opened = s.reveal_many(&[&out[0], &out[1]])?;
        Ok((
            rounds,
            opened[0].decode(&s.codec()),
            opened[1].data().to_vec(),
        ))
    });
    assert_eq!(got.0, 2);
    let want: Vec<f64> = bits
        .iter()
        .zip(&vals)
        .map(|(&b, &v)| b as f64 * v)
        .collect();
    assert_eq!(got.1, want);
    assert_eq!(got.2, bits.iter().map(|&b| b as u64).collect::<Vec<_>>());
}

#[test]
fn xor_not_and_and() {
    let a = [0i64, 0, 1, 1];
    let b = [0i64, 1, 0, 1];
    let got = run(|s| {
        let xa = s.share_from(P0, &RingTensor::from_i64(&[4], &a)?)?;
        let xb = s.share_from(P2, &RingTensor::from_i64(&[4], &b)?)?;
        let ba = s.a2b(&xa)?.extract_bit(0);
        let bb = s.a2b(&xb)?.extract_bit(0);
        let and = s.and(&ba, &bb)?;
        let xor = ba.xor(&bb)?;
        let nand = and.not();
        let mut out = Vec::new();
        for v in [&and, &xor, &nand] {
            out.push(s.reveal_bool(v)?.data().to_vec());
        }
        Ok(out)
    });
    assert_eq!(
        got,
        vec![vec![0, 0, 0, 1], vec![0, 1, 1, 0], vec![1, 1, 1, 0]]
    );
}

#[test]
fn public_bool_shares_open_to_their_value() {
    let out = simulate(&SimOptions::default(), |s| {
        let v = RingTensor::from_i64(&[3], &[5, 0, 255])?;
        let b = BoolShare::public(s.party(), &v, 8)?;
        s.reveal_bool(&b.xor_public(&RingTensor::from_i64(&[3], &[1, 1, 1])?)?)
    })
    .unwrap();
    assert_eq!(out.outputs[0].data(), &[4, 1, 254]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn a2b_agrees_with_twos_complement(vals in prop::collection::vec(any::<i64>(), 1..32)) {
        let got = run(|s| {
            let x = s.share_from(P2, &RingTensor::from_i64(&[vals.len()], &vals)?)?;
            let b = s.a2b(&x)?;
            Ok(s.reveal_bool(&b)?.data().to_vec())
        });
        prop_assert_eq!(got, vals.iter().map(|&v| v as u64).collect::<Vec<_>>());
    }

    #[test]
    fn lt_const_agrees_with_plain_comparison(x in -8.0f64..8.0, p in -8.0f64..8.0) {
        let xg = on_grid(&[x])[0];
        let got = run(|s| {
            let v = s.share_from(P0, &enc(&[1], &[xg]))?;
            let b = s.lt_const(&v, p)?;
            Ok(s.reveal_bool(&b)?.data()[0])
        });
        prop_assert_eq!(got, (xg < p) as u64);
    }
}
