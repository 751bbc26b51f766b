//! The `name:params` family grammar.

use ballcert::{Error, LAverage, Result};

fn numbers(spec: &str, params: &str, arity: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = params
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidParameter(format!("`{spec}`: parameters must be numbers")))?;
    if values.len() != arity {
        return Err(Error::InvalidParameter(format!(
            "`{spec}`: expected {arity} parameter(s), got {}",
            values.len()
        )));
    }
    Ok(values)
}

/// Parses `constant:L`, `affine:GAMMA,L`, `holder:C,A`, `rational:GAMMA,C`
/// or `tabulated:PATH`.
pub fn parse_family(spec: &str) -> Result<LAverage> {
    let (name, params) = spec
        .split_once(':')
        .ok_or_else(|| Error::InvalidParameter(format!("family `{spec}` must look like name:params")))?;
    match name {
        "constant" => LAverage::constant(numbers(spec, params, 1)?[0]),
        "affine" => {
            let v = numbers(spec, params, 2)?;
            LAverage::affine(v[0], v[1])
        }
        "holder" => {
            let v = numbers(spec, params, 2)?;
            LAverage::holder(v[0], v[1])
        }
        "rational" => {
            let v = numbers(spec, params, 2)?;
            LAverage::rational(v[0], v[1])
        }
        "tabulated" => LAverage::tabulated_from_csv(params),
        other => Err(Error::InvalidParameter(format!(
            "unknown family `{other}` (constant, affine, holder, rational, tabulated)"
        ))),
    }
}

/// Comma-separated point.
pub fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("`{s}` is not a comma-separated point")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn grammar() {
        assert_eq!(parse_family("constant:2").unwrap(), LAverage::Constant { l: 2.0 });
        assert_eq!(parse_family("affine:0.5, 3").unwrap(), LAverage::Affine { gamma: 0.5, l: 3.0 });
        assert_eq!(parse_family("holder:1,0.5").unwrap(), LAverage::Holder { c: 1.0, a: 0.5 });
        assert_eq!(parse_family("rational:1,1").unwrap(), LAverage::Rational { gamma: 1.0, c: 1.0 });
    }

    #[test]
    fn arity_and_validation() {
        assert!(parse_family("constant:1,2").is_err());
        assert!(parse_family("affine:1").is_err());
        assert!(parse_family("holder:1,1.5").is_err());
        assert!(parse_family("constant:-1").is_err());
        assert!(parse_family("constant").is_err());
        assert!(parse_family("cubic:1").is_err());
        assert!(parse_family("constant:x").is_err());
    }

    #[test]
    fn tabulated_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "u,L\n0,1\n1,2").unwrap();
        let fam = parse_family(&format!("tabulated:{}", f.path().display())).unwrap();
        assert_eq!(fam.name(), "tabulated");
        assert!(parse_family("tabulated:/nonexistent/file.csv").is_err());
    }

    #[test]
    fn points() {
        assert_eq!(parse_point("1.1, 0.95").unwrap(), vec![1.1, 0.95]);
        assert_eq!(parse_point("-0.07").unwrap(), vec![-0.07]);
        assert!(parse_point("1,,2").is_err());
    }
}
