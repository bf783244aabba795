use std::fmt::Write as _;
use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::Value;

/// Where a reference value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RefProvenance {
    /// Finite sums of closed-form kernel expressions.
    ExactKernel,
    /// Closed-form integral or identity.
    ClosedForm,
    /// Gauss–Hermite / Gauss–Legendre quadrature.
    Quadrature,
    /// Truncated series with a rigorous tail bound.
    Series,
    /// An independent Monte Carlo estimate.
    MonteCarlo,
}

/// One verification record: `{test, params, estimate, se, reference, provenance, pass}`
/// plus free-form `detail`.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub test: String,
    pub params: Value,
    pub estimate: f64,
    pub se: f64,
    pub reference: f64,
    pub provenance: RefProvenance,
    pub pass: bool,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        to_json_string(self)
    }
}

/// JSON formatter writing every float with 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct RoundTripFormatter;

impl Formatter for RoundTripFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Compact JSON with [`RoundTripFormatter`] floats.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, RoundTripFormatter);
    value.serialize(&mut ser).expect("in-memory JSON serialization");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Fixed-width table of reports for terminals.
pub fn render_table(reports: &[VerifyReport]) -> String {
    let width = reports.iter().map(|r| r.test.len()).max().unwrap_or(4).max(4);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>14}  {:>11}  {:>14}  {:<12}  {}",
        "test", "estimate", "se", "reference", "provenance", "result"
    );
    for r in reports {
        let prov = serde_json::to_value(r.provenance).unwrap();
        let _ = writeln!(
            out,
            "{:<width$}  {:>14.6e}  {:>11.3e}  {:>14.6e}  {:<12}  {}",
            r.test,
            r.estimate,
            r.se,
            r.reference,
            prov.as_str().unwrap_or(""),
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_17_digits() {
        let xs = [std::f64::consts::SQRT_2, 0.1, -3.0e-300, 1.0 / 3.0, 0.0];
        let text = to_json_string(&xs);
        assert!(text.contains("1.4142135623730951e0"), "{text}");
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, xs);
        assert_eq!(to_json_string(&f64::NAN), "null");
    }
}
