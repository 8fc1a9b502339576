//! JSON schema for assignments, bases, density matrices and reports.
//!
//! Complex scalars are `[re, im]`, matrices are arrays of rows, a basis is
//! `{"label", "vectors"}` or `{"label", "projectors"}`, an assignment is
//! `{"basis", "probs"}` and a set is `{"dimension", "assignments"}`.
//! Floats are written with 17 significant digits so every `f64` survives a
//! round trip unchanged.

use std::io;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::model::{Assignment, AssignmentSet, Basis, DensityMatrix, ProbabilityVector};
use crate::numerics::RankProfile;
use crate::solver::{AuditOutcome, ConsistencyReport, PairKind, PairStructure};
use crate::{c, CMat, CVec};

/// Formats a finite float with 17 significant digits, trailing zeros trimmed.
pub fn format_f64(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|ch| *ch != '.').collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    if (-5..17).contains(&exp) {
        let point = exp + 1;
        let body = if point <= 0 {
            format!("0.{}{}", "0".repeat((-point) as usize), digits)
        } else if point as usize >= digits.len() {
            format!("{}{}.0", digits, "0".repeat(point as usize - digits.len()))
        } else {
            let (int, frac) = digits.split_at(point as usize);
            format!("{int}.{frac}")
        };
        format!("{sign}{body}")
    } else {
        let (lead, rest) = digits.split_at(1);
        let frac = if rest.is_empty() { "0" } else { rest };
        format!("{sign}{lead}.{frac}e{exp}")
    }
}

/// serde_json formatter that writes floats through [`format_f64`].
#[derive(Debug, Clone, Copy, Default)]
pub struct PreciseFormatter;

impl serde_json::ser::Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }
}

/// Serializes any value as compact JSON with 17-digit floats.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, PreciseFormatter);
    value.serialize(&mut ser).map_err(|e| Error::Schema(e.to_string()))?;
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, ctx: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| schema(format!("{ctx}: missing \"{key}\"")))
}

fn as_object<'a>(v: &'a Value, ctx: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| schema(format!("{ctx}: expected an object")))
}

fn as_array<'a>(v: &'a Value, ctx: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| schema(format!("{ctx}: expected an array")))
}

fn as_f64(v: &Value, ctx: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| schema(format!("{ctx}: expected a number")))
}

fn parse_complex(v: &Value, ctx: &str) -> Result<num_complex::Complex64> {
    match v {
        Value::Number(_) => Ok(c(as_f64(v, ctx)?, 0.0)),
        Value::Array(parts) if parts.len() == 2 => Ok(c(as_f64(&parts[0], ctx)?, as_f64(&parts[1], ctx)?)),
        _ => Err(schema(format!("{ctx}: expected [re, im]"))),
    }
}

fn complex_value(z: num_complex::Complex64) -> Value {
    json!([z.re, z.im])
}

/// Parses an array of rows of complex scalars into a matrix.
pub fn parse_matrix(v: &Value) -> Result<CMat> {
    let rows = as_array(v, "matrix")?;
    if rows.is_empty() {
        return Err(schema("matrix: no rows"));
    }
    let width = as_array(&rows[0], "matrix row")?.len();
    let mut entries = Vec::with_capacity(rows.len() * width);
    for (r, row) in rows.iter().enumerate() {
        let row = as_array(row, "matrix row")?;
        if row.len() != width {
            return Err(schema(format!("matrix: row {r} has {} entries, expected {width}", row.len())));
        }
        for z in row {
            entries.push(parse_complex(z, "matrix entry")?);
        }
    }
    Ok(CMat::from_row_slice(rows.len(), width, &entries))
}

pub fn matrix_value(m: &CMat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|r| Value::Array((0..m.ncols()).map(|col| complex_value(m[(r, col)])).collect()))
            .collect(),
    )
}

fn parse_vector(v: &Value) -> Result<CVec> {
    let entries = as_array(v, "vector")?
        .iter()
        .map(|z| parse_complex(z, "vector entry"))
        .collect::<Result<Vec<_>>>()?;
    Ok(CVec::from_vec(entries))
}

pub fn parse_basis(v: &Value) -> Result<Basis> {
    let obj = as_object(v, "basis")?;
    let label = match obj.get("label") {
        Some(l) => l.as_str().ok_or_else(|| schema("basis: label must be a string"))?.to_string(),
        None => String::new(),
    };
    match (obj.get("vectors"), obj.get("projectors")) {
        (Some(vs), None) => {
            let vectors = as_array(vs, "basis vectors")?
                .iter()
                .map(parse_vector)
                .collect::<Result<Vec<_>>>()?;
            Basis::from_vectors(label, vectors)
        }
        (None, Some(ps)) => {
            let projectors = as_array(ps, "basis projectors")?
                .iter()
                .map(parse_matrix)
                .collect::<Result<Vec<_>>>()?;
            Basis::from_projectors(label, projectors)
        }
        _ => Err(schema("basis: exactly one of \"vectors\" or \"projectors\" is required")),
    }
}

pub fn basis_value(b: &Basis) -> Value {
    if b.authored_as_vectors() {
        let vectors: Vec<Value> = b
            .vectors()
            .iter()
            .map(|v| Value::Array(v.iter().map(|z| complex_value(*z)).collect()))
            .collect();
        json!({ "label": b.label(), "vectors": vectors })
    } else {
        let projectors: Vec<Value> = b.projectors().iter().map(matrix_value).collect();
        json!({ "label": b.label(), "projectors": projectors })
    }
}

pub fn parse_assignment(v: &Value) -> Result<Assignment> {
    let obj = as_object(v, "assignment")?;
    let basis = parse_basis(field(obj, "basis", "assignment")?)?;
    let probs = as_array(field(obj, "probs", "assignment")?, "probs")?
        .iter()
        .map(|p| as_f64(p, "probs entry"))
        .collect::<Result<Vec<_>>>()?;
    Assignment::new(basis, ProbabilityVector::new(probs)?)
}

pub fn parse_assignment_set_value(v: &Value) -> Result<AssignmentSet> {
    let obj = as_object(v, "assignment set")?;
    let dimension = field(obj, "dimension", "assignment set")?
        .as_u64()
        .ok_or_else(|| schema("assignment set: dimension must be a positive integer"))? as usize;
    let assignments = as_array(field(obj, "assignments", "assignment set")?, "assignments")?
        .iter()
        .map(parse_assignment)
        .collect::<Result<Vec<_>>>()?;
    AssignmentSet::new(dimension, assignments)
}

/// Parses and validates an assignment set from JSON text.
pub fn parse_assignment_set(text: &str) -> Result<AssignmentSet> {
    let v: Value = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    parse_assignment_set_value(&v)
}

pub fn assignment_set_value(f: &AssignmentSet) -> Value {
    let assignments: Vec<Value> = f
        .assignments()
        .iter()
        .map(|a| json!({ "basis": basis_value(a.basis()), "probs": a.probs().values() }))
        .collect();
    json!({ "dimension": f.dimension(), "assignments": assignments })
}

pub fn assignment_set_to_string(f: &AssignmentSet) -> String {
    to_json_string(&assignment_set_value(f)).expect("values serialize")
}

/// Parses a density matrix given as a bare matrix or `{"matrix": ...}`.
pub fn parse_density(text: &str) -> Result<DensityMatrix> {
    let v: Value = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    let m = match &v {
        Value::Object(obj) => parse_matrix(field(obj, "matrix", "density")?)?,
        _ => parse_matrix(&v)?,
    };
    if m.nrows() != m.ncols() {
        return Err(schema(format!("density: {}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    DensityMatrix::new(m)
}

pub fn rank_profile_value(p: &RankProfile) -> Value {
    json!({
        "rank": p.rank,
        "singular_values": p.singular_values,
        "threshold_used": p.threshold_used,
    })
}

pub fn consistency_report_value(r: &ConsistencyReport) -> Value {
    json!({
        "verdict": r.verdict.as_str(),
        "witness": r.witness.as_ref().map(|w| matrix_value(w.matrix())),
        "rank_profile": rank_profile_value(&r.rank_profile),
        "residual": r.residual,
        "psd_margin": r.psd_margin,
        "iterations_used": r.iterations_used,
        "nullspace_dim": r.nullspace_dim,
        "upper_bound": r.upper_bound,
    })
}

pub fn pair_structure_value(p: &PairStructure) -> Value {
    let kind = match p.kind {
        PairKind::SamePermuted => "SamePermuted",
        PairKind::PlanePair => "PlanePair",
        PairKind::GeneralPosition => "GeneralPosition",
    };
    json!({
        "kind": kind,
        "plane_indices": p.plane_indices.map(|pi| json!({
            "primed": [pi.primed.0, pi.primed.1],
            "base": [pi.base.0, pi.base.1],
        })),
        "permutation": p.permutation.as_ref().map(|perm| {
            perm.iter().map(|&(a, b)| json!([a, b])).collect::<Vec<_>>()
        }),
        "rank_increment": p.rank_increment,
    })
}

pub fn audit_outcome_value(o: &AuditOutcome) -> Value {
    match o {
        AuditOutcome::AllConsistent { subsets_checked } => json!({
            "outcome": "AllConsistent",
            "subsets_checked": subsets_checked,
        }),
        AuditOutcome::FirstFailure { subset, report } => json!({
            "outcome": "FirstFailure",
            "subset": subset,
            "report": consistency_report_value(report),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::dim2_example;

    #[test]
    fn formats_with_seventeen_digits() {
        assert_eq!(format_f64(0.5), "0.5");
        assert_eq!(format_f64(1.0), "1.0");
        assert_eq!(format_f64(-2.0), "-2.0");
        assert_eq!(format_f64(0.1), "0.10000000000000001");
        assert_eq!(format_f64(1e-7), "9.9999999999999995e-8");
        assert_eq!(format_f64(1e-300), "1.0e-300");
        assert_eq!(format_f64(1e20), "1.0e20");
        assert_eq!(format_f64(123.25), "123.25");
        assert_eq!(format_f64(0.00012), "0.00012");
    }

    #[test]
    fn formatted_floats_parse_back_exactly() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MAX, f64::MIN_POSITIVE, std::f64::consts::FRAC_1_SQRT_2] {
            assert_eq!(format_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn assignment_set_round_trips() {
        let f = dim2_example();
        let text = assignment_set_to_string(&f);
        let g = parse_assignment_set(&text).unwrap();
        assert_eq!(assignment_set_value(&g), assignment_set_value(&f));
    }

    #[test]
    fn rejects_ambiguous_basis() {
        let v = json!({"label": "b", "vectors": [[1, 0], [0, 1]], "projectors": []});
        assert!(matches!(parse_basis(&v), Err(Error::Schema(_))));
    }

    #[test]
    fn density_accepts_both_forms() {
        let bare = "[[[0.5,0],[0,0]],[[0,0],[0.5,0]]]";
        let wrapped = format!("{{\"matrix\": {bare}}}");
        assert_eq!(parse_density(bare).unwrap(), parse_density(&wrapped).unwrap());
    }
}
