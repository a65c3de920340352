use std::collections::BTreeSet;

use dioph_core::detmethod::{build_matrix, cover_points, det_and_rank, Strategy};
use dioph_core::funcdsl::{diff, eval_rigorous, parse, MembershipOracle, ToleranceMode};
use dioph_core::rationals::{count_points, Interval};
use dioph_core::{PointCloud, Rational};

fn unit_box(n: usize) -> Vec<Interval> {
    vec![(Rational::from(-1), Rational::from(1)); n]
}

/// Rational points of the unit circle with height ≤ h, from integer
/// solutions of a² + b² = c².
fn circle_oracle(h: i64) -> BTreeSet<(Rational, Rational)> {
    let mut out = BTreeSet::new();
    for c in 1..=h {
        for a in -c..=c {
            for b in -c..=c {
                if a * a + b * b == c * c {
                    out.insert((Rational::from((a, c)), Rational::from((b, c))));
                }
            }
        }
    }
    out
}

#[test]
fn circle_count_cover_and_csv() {
    let h = 25;
    let oracle = MembershipOracle::new(vec![parse("x1^2 + x2^2 - 1").unwrap()], 2, Default::default(), ToleranceMode::Exact)
        .unwrap();
    let (n, cloud) = count_points(&oracle, 2, h, &unit_box(2)).unwrap();
    let want = circle_oracle(h as i64);
    let got: BTreeSet<_> = cloud.points.iter().map(|p| (p.coords()[0].clone(), p.coords()[1].clone())).collect();
    assert_eq!(got, want);
    assert_eq!(n as usize, want.len());

    let cover = cover_points(&cloud, None, 2, Strategy::Greedy, None).unwrap();
    assert!(cover.verify(&cloud));
    assert_eq!(cover.size(), 1);
    assert!(cover.uncovered.is_empty());

    // degree 1 cannot hold more than two circle points
    let line = cover_points(&cloud, None, 1, Strategy::Greedy, None).unwrap();
    assert!(line.verify(&cloud));
    assert!(line.size() >= cloud.len() / 2);

    let back = PointCloud::from_csv(&cloud.to_csv(), cloud.height_bound).unwrap();
    assert_eq!(back, cloud);
}

#[test]
fn determinant_vanishes_on_the_circle() {
    let oracle = MembershipOracle::new(vec![parse("x1^2 + x2^2 - 1").unwrap()], 2, Default::default(), ToleranceMode::Exact)
        .unwrap();
    let (_, cloud) = count_points(&oracle, 2, 13, &unit_box(2)).unwrap();
    let six = PointCloud {
        points: cloud.points[..6].to_vec(),
        height_bound: 13,
    };
    let r = det_and_rank(&build_matrix(&six, 2).unwrap());
    assert_eq!(r.determinant, Some(Rational::new()));
    assert_eq!(r.rank, 5);
}

#[test]
fn derivatives_match_difference_quotients() {
    let cases = ["exp(x1)*x1^3", "log(1 + x1^2)/(2 + x1)", "sin(x1)*cos(x1) + x1^(1/3)", "2^x1 - pi*x1"];
    let step = Rational::from((1, 1 << 20));
    for src in cases {
        let f = parse(src).unwrap();
        let df = diff(&f, 1).unwrap();
        for k in 1..10 {
            let x = Rational::from((k, 10));
            let at = |e: &dioph_core::Expr, x: Rational| eval_rigorous(e, &[x], 128).unwrap().to_f64();
            let hi = at(&f, Rational::from(&x + &step));
            let lo = at(&f, Rational::from(&x - &step));
            let quotient = (hi - lo) / (2.0 * step.to_f64());
            let exact = at(&df, x);
            assert!((quotient - exact).abs() < 1e-6 * (1.0 + exact.abs()), "{src} at {k}/10: {quotient} vs {exact}");
        }
    }
}
