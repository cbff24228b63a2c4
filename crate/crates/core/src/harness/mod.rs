//! Experiment runner: trains base policies, aligns them with their
//! instructions, transfers to a held-out target under each strategy and
//! writes CSV artifacts plus a plain-text report.

mod config;
mod experiment;
mod oracle;
mod probe;
pub mod seeds;

pub use config::{ExperimentConfig, ProbeConfig, DEFAULT_BASE_INSTRUCTIONS, DEFAULT_TARGET, TARGET_LABEL};
pub use experiment::{
    align_bases, run_experiment, similarity_profile, target_init, train_base_policies, BaseSet, CellStats, TransferReport, TrialRow,
};
pub use oracle::{oracle_report, OracleReport};
pub use probe::{run_objectgrid_probe, ProbeReport};

/// Formats a float with 9 significant digits, choosing fixed or exponent
/// notation the way C's `%.9g` does.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// CSV text with `header` followed by `rows`; fields are quoted only when
/// they need to be.
pub(crate) fn csv_text<R, I>(header: &[&str], rows: R) -> crate::Result<String>
where
    R: IntoIterator<Item = I>,
    I: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output of utf-8 fields"))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median with the midpoint convention for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_matches_printf_g() {
        let cases = [
            (1.0, "1"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333"),
            (4.0 / 3.0, "1.33333333"),
            (-2.5e-7, "-2.5e-07"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001, "1e-05"),
            (-0.01, "-0.01"),
            (99999999.96, "100000000"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_float(x), want, "{x}");
        }
    }

    #[test]
    fn formatted_floats_keep_nine_digits() {
        for x in [std::f64::consts::PI, -1e-3 / 7.0, 2.0f64.sqrt() * 1e12] {
            let back: f64 = fmt_float(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 5e-9, "{x}");
        }
    }

    #[test]
    fn csv_fields_with_commas_are_quoted() {
        let text = csv_text(&["a", "b"], [vec!["go to the red, cone".to_string(), "1".to_string()]]).unwrap();
        assert_eq!(text, "a,b\n\"go to the red, cone\",1\n");
    }

    #[test]
    fn median_and_mean() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
    }
}
