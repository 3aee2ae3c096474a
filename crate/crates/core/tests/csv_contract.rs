//! Fixed CSV headers consumed by the plotting component, and sorted, parseable rows.

use marcinkiewicz::harness::{run, CsvTable};
use marcinkiewicz::weights::CHAR_CSV_HEADER;

const UNIFORMITY: [&str; 12] = [
    "weight", "beta", "p", "q", "characteristic", "exponent", "lhs_norm", "f_norm", "scale",
    "ratio", "predictor", "degenerate",
];
const DOMINATION: [&str; 10] = [
    "l", "beta", "weight", "d_used", "family_size", "min_ratio", "sparse_ok", "margin_tripled",
    "margin_cube", "weighted_ratio",
];
const MULTIPLIER: [&str; 10] = [
    "beta", "j", "t", "region", "xi_norm", "z", "khat_abs", "envelope", "normalized",
    "normalized_large",
];
const MULTIPLIER_SUMMARY: [&str; 10] = [
    "beta", "j", "t", "khat_at_zero", "small_slope", "expected_slope", "large_lower_max",
    "large_upper_max", "large_bounded", "envelope_tail_monotone",
];

#[test]
fn headers_and_row_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for cmd in ["exp-uniformity", "exp-commutator", "exp-domination", "exp-multiplier", "weights"] {
        let code = run(["marcinkiewicz", cmd, "--grid", "32", "--beta", "0.01,0.25,0.1", "--out", out]);
        assert_eq!(code, 0, "{cmd}");
    }
    let read = |name: &str| CsvTable::read(&dir.path().join(format!("{name}.csv"))).unwrap();
    let expect = [
        ("uniformity", &UNIFORMITY[..]),
        ("commutator", &UNIFORMITY[..]),
        ("domination", &DOMINATION[..]),
        ("multiplier", &MULTIPLIER[..]),
        ("multiplier_summary", &MULTIPLIER_SUMMARY[..]),
        ("weights", &CHAR_CSV_HEADER[..]),
    ];
    for (name, header) in expect {
        let t = read(name);
        assert_eq!(t.header, header, "{name}");
        assert!(!t.rows.is_empty(), "{name}");
    }
    for name in ["uniformity", "commutator", "multiplier_summary"] {
        let t = read(name);
        let w: Vec<&str> = if name == "multiplier_summary" {
            vec![""; t.rows.len()]
        } else {
            t.column("weight").unwrap()
        };
        let b = t.column_f64("beta").unwrap();
        for i in 1..b.len() {
            if w[i] == w[i - 1] {
                assert!(b[i] <= b[i - 1], "{name} rows not sorted by beta descending");
            }
        }
    }
    for v in read("uniformity").column_f64("ratio").unwrap() {
        assert!(v.is_finite() && v > 0.0);
    }
}
