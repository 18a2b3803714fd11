use cmi_explain::io::{read_samples_csv, write_samples};
use cmi_explain::model::{GaussianModel, SampleSet};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6f64,
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
    ]
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(
        (m, n, cells) in (1usize..8, 1usize..5)
            .prop_flat_map(|(m, n)| (Just(m), Just(n), proptest::collection::vec(finite(), m * (n + 2))))
    ) {
        let w = n + 2;
        let s = SampleSet::new(
            DMatrix::from_fn(m, n, |i, j| cells[i * w + j]),
            DVector::from_fn(m, |i, _| cells[i * w + n]),
            DVector::from_fn(m, |i, _| cells[i * w + n + 1]),
        ).unwrap();
        let mut buf = Vec::new();
        write_samples(&s, &mut buf).unwrap();
        prop_assert_eq!(read_samples_csv(buf.as_slice()).unwrap(), s);
    }
}

#[test]
fn sampled_file_round_trip() {
    let model = GaussianModel::random(5, (0.5, 2.0), 9).unwrap();
    let s = model.sample(300, 10).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    cmi_explain::io::write_samples_csv(&s, &path).unwrap();
    assert_eq!(cmi_explain::io::load_samples_csv(&path).unwrap(), s);
    let err = cmi_explain::io::load_samples_csv(&dir.path().join("nope.csv")).unwrap_err();
    assert!(err.to_string().contains("nope.csv"));
}
