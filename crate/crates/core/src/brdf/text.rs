//! Key-value text form of a [`BrdfSpec`].
//!
//! ```text
//! # comment
//! model = ggx
//! diffuse_r = 0.5
//! roughness = 0.2
//! ```
//!
//! Blank lines and `#` comments are ignored. The `model` line must come
//! before any parameter; parameters not listed keep the model defaults.

use super::{BrdfModel, BrdfSpec};
use crate::error::{Error, Result};

pub fn parse_spec(text: &str) -> Result<BrdfSpec> {
    let mut model: Option<BrdfModel> = None;
    let mut entries: Vec<(usize, String, f64)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("expected 'name = value', got '{line}'"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key == "model" {
            if model.is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "model given twice".into(),
                });
            }
            model = Some(value.parse().map_err(|e: Error| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?);
            continue;
        }
        if model.is_none() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("parameter '{key}' before the model line"),
            });
        }
        let v: f64 = value.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("'{value}' is not a number"),
        })?;
        if entries.iter().any(|(_, k, _)| k == key) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("parameter '{key}' given twice"),
            });
        }
        entries.push((line_no, key.to_string(), v));
    }
    let model = model.ok_or(Error::Parse {
        line: text.lines().count().max(1),
        message: "missing 'model = ...' line".into(),
    })?;

    // Resolve the layout first, then set values one by one so that a bad
    // value is reported against its own line.
    let mut spec = BrdfSpec::new(model);
    if let Some((line, _, _)) = entries.iter().find(|(_, k, _)| k.starts_with("ior")) {
        let form = if entries.iter().any(|(_, k, _)| k == super::IOR) {
            super::SpecularForm::RealIor
        } else {
            super::SpecularForm::ComplexIor
        };
        spec = BrdfSpec::with_form(model, form).map_err(|e| Error::Parse {
            line: *line,
            message: e.to_string(),
        })?;
    }
    for (line, key, v) in &entries {
        spec.set(key, *v).map_err(|e| Error::Parse {
            line: *line,
            message: e.to_string(),
        })?;
    }
    Ok(spec)
}

pub fn format_spec(spec: &BrdfSpec) -> String {
    let mut out = format!("model = {}\n", spec.model());
    for p in spec.params() {
        // `{:?}` keeps full round-trip precision for f64.
        out.push_str(&format!("{} = {:?}\n", p.name, p.value));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::SpecularForm;

    #[test]
    fn parses_comments_and_defaults() {
        let s = parse_spec("# a metal\nmodel = GGX\n\nroughness = 0.2 # smooth\n").unwrap();
        assert_eq!(s.model(), BrdfModel::Ggx);
        assert_eq!(s.roughness(), Some(0.2));
        assert_eq!(s.get("diffuse_r"), Some(0.5));
    }

    #[test]
    fn infers_ior_form() {
        let s = parse_spec("model = beckmann\nior = 1.33\n").unwrap();
        assert_eq!(s.form(), SpecularForm::RealIor);
        let c = parse_spec("model = ggx\nior_n_r = 0.2\nior_k_r = 3.1\n").unwrap();
        assert_eq!(c.form(), SpecularForm::ComplexIor);
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse_spec("model = ggx\nroughness = 0.2\nspecular_r = abc\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_spec("model = ggx\nroughness = 7\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_spec("roughness = 0.1\nmodel = ggx\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_spec("model = ggx\nwidth\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_spec("model = ggx\nshininess = 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse_spec("").is_err());
    }

    #[test]
    fn format_then_parse_is_identity() {
        let mut s = BrdfSpec::new(BrdfModel::AshikhminShirley);
        s.set("specular_g", 0.123456789012345).unwrap();
        s.set("roughness", 0.0421).unwrap();
        assert_eq!(parse_spec(&format_spec(&s)).unwrap(), s);
    }
}
