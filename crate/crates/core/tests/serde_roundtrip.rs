use std::fmt::Debug;

use proptest::num::f64::{NEGATIVE, NORMAL, POSITIVE, SUBNORMAL, ZERO};
use proptest::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use scm_core::qstats::{HbtOptions, SpinParams, ThreeLevelRates};
use scm_core::scanfield::{Field2D, FieldModel, TrackGeometry};
use scm_core::spectro::{ModeEstimate, ModeLine, SpectrumFit};
use scm_core::{CavityMode, CoupledSystemParams, DetectionCoeffs, Series, Unit};

fn finite() -> impl Strategy<Value = f64> {
    POSITIVE | NEGATIVE | NORMAL | SUBNORMAL | ZERO
}

fn bits<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap()
}

/// Round trips through JSON and checks the value and its encoding are unchanged.
fn json_round_trip<T: Serialize + DeserializeOwned + PartialEq + Debug>(v: &T) -> Result<(), TestCaseError> {
    let text = bits(v);
    let back: T = serde_json::from_str(&text).unwrap();
    prop_assert_eq!(&back, v);
    prop_assert_eq!(bits(&back), text);
    Ok(())
}

fn unit() -> impl Strategy<Value = Unit> {
    prop_oneof![
        Just(Unit::Nm),
        Just(Unit::Ns),
        Just(Unit::RadPerNs),
        Just(Unit::Ghz),
        Just(Unit::Counts),
        Just(Unit::Normalized),
        Just(Unit::Dimensionless),
    ]
}

fn series() -> impl Strategy<Value = Series> {
    (
        proptest::collection::vec((1e-9..1e6f64, finite()), 1..40),
        -1e6..1e6f64,
        unit(),
        unit(),
    )
        .prop_map(|(steps, x0, xu, yu)| {
            let mut x = x0;
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for (dx, y) in steps {
                xs.push(x);
                ys.push(y);
                x += dx;
            }
            Series::new(xs, ys, xu, yu).unwrap()
        })
}

proptest! {
    #[test]
    fn params_round_trip(v in proptest::array::uniform5(finite())) {
        json_round_trip(&CoupledSystemParams {
            detuning: v[0],
            g: v[1].abs(),
            kappa: v[2].abs(),
            gamma: v[3].abs(),
            gamma_d: v[4].abs(),
        })?;
    }

    #[test]
    fn coefficient_and_mode_types_round_trip(v in proptest::array::uniform4(finite()), w in proptest::array::uniform3(finite())) {
        json_round_trip(&DetectionCoeffs { c_nv: v[0], c_cav: v[1], c_int: v[2], delta_phi: v[3] })?;
        json_round_trip(&ModeEstimate { lambda_c: w[0], q_factor: w[1], f_c: w[2] })?;
        json_round_trip(&ModeLine { omega_c: w[0], kappa_hwhm: w[1], f_c: w[2] })?;
        json_round_trip(&ThreeLevelRates { pump: v[0], decay: v[1], shelving: v[2], deshelving: v[3] })?;
        json_round_trip(&TrackGeometry { z: v[0], y: v[1], theta: v[2], x_offset: v[3], f_c_max: w[0] })?;
    }

    #[test]
    fn cavity_and_field_models_round_trip(lambda in 400.0..900.0f64, q in 10.0..1e5f64, f in finite(), fill in proptest::option::of(1.0..200.0f64)) {
        let mut field = FieldModel::new(CavityMode::new(lambda, q), f);
        field.node_fill_length = fill;
        json_round_trip(&field.mode)?;
        json_round_trip(&field)?;
    }

    #[test]
    fn options_round_trip(t in finite(), w in finite(), d in finite(), seed in any::<u64>(), z in 0.0..1.0f64, t2 in proptest::option::of(finite())) {
        json_round_trip(&HbtOptions { total_time: t, bin_width: w, max_delay: d, seed, dark_count_rate: z })?;
        json_round_trip(&SpinParams { zero_field_split: t, zeeman_split: w, linewidth: d, contrast: z, rabi_freq: w, t2_star: t2 })?;
    }

    #[test]
    fn series_round_trips_through_json_and_csv(s in series()) {
        json_round_trip(&s)?;
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = Series::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.x_unit, s.x_unit);
        prop_assert_eq!(back.y_unit, s.y_unit);
        for (a, b) in back.x.iter().chain(&back.y).zip(s.x.iter().chain(&s.y)) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(back.sha256(), s.sha256());
    }

    #[test]
    fn field_round_trips_through_csv(
        nx in 1usize..8,
        ny in 1usize..6,
        d in (1e-3..1e3f64, 1e-3..1e3f64),
        vals in proptest::collection::vec(finite(), 48),
    ) {
        let f = Field2D::from_fn(nx, ny, d.0, d.1, |i, j| vals[j * nx + i]);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = Field2D::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!((back.nx, back.ny), (nx, ny));
        prop_assert_eq!(back.dx.to_bits(), f.dx.to_bits());
        prop_assert_eq!(back.dy.to_bits(), f.dy.to_bits());
        for (a, b) in back.values.iter().zip(&f.values) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        json_round_trip(&f)?;
    }

    #[test]
    fn fit_results_round_trip(m in proptest::array::uniform3(finite()), c in proptest::array::uniform4(finite())) {
        let mut fit = SpectrumFit::guess(
            vec![ModeEstimate { lambda_c: m[0], q_factor: m[1], f_c: m[2] }],
            DetectionCoeffs { c_nv: c[0], c_cav: c[1], c_int: c[2], delta_phi: c[3] },
        );
        fit.free_parameters = vec!["lambda_c.0".into(), "c_nv".into()];
        fit.covariance = vec![vec![c[0], c[1]], vec![c[1], c[2]]];
        fit.stderr = [("lambda_c.0".to_string(), m[0]), ("c_nv".to_string(), c[3])].into();
        fit.objective_history = vec![m[1], m[2]];
        json_round_trip(&fit)?;
    }
}

#[test]
fn unit_tokens_are_stable() {
    for (u, token) in [
        (Unit::Nm, "nm"),
        (Unit::Ns, "ns"),
        (Unit::RadPerNs, "rad_per_ns"),
        (Unit::Ghz, "GHz"),
        (Unit::Counts, "counts"),
        (Unit::Normalized, "normalized"),
        (Unit::Dimensionless, "dimensionless"),
    ] {
        assert_eq!(bits(&u), format!("\"{token}\""));
        assert_eq!(token.parse::<Unit>().unwrap(), u);
    }
    assert!("furlongs".parse::<Unit>().is_err());
}
