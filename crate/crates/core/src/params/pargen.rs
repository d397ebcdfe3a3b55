//! TOML → parfile generation.
//!
//! Input tables are unit names; their keys are parameters owned by that unit.
//! Output groups `name = value` lines under a `# <Unit>` header per unit that
//! owns at least one parameter, units in schema order and keys sorted.

use std::collections::BTreeMap;

use super::{unit_name, ParamError, ParamValue, ParameterDecl, RawParfile};

fn toml_scalar(key: &str, v: &toml::Value) -> Result<ParamValue, ParamError> {
    Ok(match v {
        toml::Value::String(s) => {
            if s.contains('"') || s.contains('\n') {
                return Err(ParamError::UnsupportedToml(format!("string value of `{key}`")));
            }
            ParamValue::Str(s.clone())
        }
        toml::Value::Integer(i) => ParamValue::Integer(*i),
        toml::Value::Float(x) if x.is_finite() => ParamValue::Real(*x),
        toml::Value::Boolean(b) => ParamValue::Bool(*b),
        _ => return Err(ParamError::UnsupportedToml(format!("value of `{key}`"))),
    })
}

/// Reads per-unit TOML tables into typed values grouped by unit, checking
/// ownership and types against `schema`.
fn read_tables(
    text: &str,
    schema: &[ParameterDecl],
) -> Result<BTreeMap<String, BTreeMap<String, ParamValue>>, ParamError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ParamError::Toml(e.to_string()))?;
    let by_name: BTreeMap<&str, &ParameterDecl> =
        schema.iter().map(|d| (d.name.as_str(), d)).collect();
    let units: Vec<&str> = schema.iter().map(|d| unit_name(&d.owner)).collect();
    let mut out: BTreeMap<String, BTreeMap<String, ParamValue>> = BTreeMap::new();
    for (unit, body) in &table {
        let toml::Value::Table(body) = body else {
            return Err(ParamError::UnsupportedToml(format!("top-level key `{unit}` outside a unit table")));
        };
        if !units.contains(&unit.as_str()) {
            return Err(ParamError::UnknownUnit(unit.clone()));
        }
        let group = out.entry(unit.clone()).or_default();
        for (key, v) in body {
            let decl = by_name
                .get(key.as_str())
                .ok_or_else(|| ParamError::UnknownParameter(key.clone()))?;
            let owner = unit_name(&decl.owner);
            if owner != unit {
                return Err(ParamError::WrongUnit {
                    param: key.clone(),
                    table: unit.clone(),
                    owner: owner.to_string(),
                });
            }
            let value = toml_scalar(key, v)?;
            if value.clone().coerce(decl.ty).is_none() {
                return Err(ParamError::TypeMismatch {
                    name: key.clone(),
                    expected: decl.ty,
                    found: value.ty(),
                });
            }
            group.insert(key.clone(), value);
        }
    }
    Ok(out)
}

/// Renders a parfile from unit-grouped TOML.
pub fn generate_parfile(text: &str, schema: &[ParameterDecl]) -> Result<String, ParamError> {
    let tables = read_tables(text, schema)?;
    let mut order: Vec<&str> = Vec::new();
    for d in schema {
        let u = unit_name(&d.owner);
        if !order.contains(&u) {
            order.push(u);
        }
    }
    let mut out = String::new();
    for (n, unit) in order.iter().enumerate() {
        if n > 0 {
            out.push('\n');
        }
        out.push_str("# ");
        out.push_str(unit);
        out.push('\n');
        if let Some(group) = tables.get(*unit) {
            for (key, value) in group {
                out.push_str(&format!("{key} = {value}\n"));
            }
        }
    }
    Ok(out)
}

/// The same TOML read directly as a parfile-equivalent value map.
pub fn ingest_toml(text: &str, schema: &[ParameterDecl]) -> Result<RawParfile, ParamError> {
    let mut raw = RawParfile::default();
    for (_, group) in read_tables(text, schema)? {
        raw.values.extend(group);
    }
    Ok(raw)
}

#[cfg(test)]
mod tests {
    use super::super::{parse_parfile, ParamType, ParameterSet};
    use super::*;

    fn decl(name: &str, ty: ParamType, owner: &str) -> ParameterDecl {
        let default = match ty {
            ParamType::Real => ParamValue::Real(0.0),
            ParamType::Integer => ParamValue::Integer(0),
            ParamType::String => ParamValue::Str(String::new()),
            ParamType::Boolean => ParamValue::Bool(false),
        };
        ParameterDecl { name: name.into(), ty, default, owner: owner.into(), comment: String::new() }
    }

    fn schema() -> Vec<ParameterDecl> {
        vec![
            decl("xmin", ParamType::Real, "Grid"),
            decl("xl_boundary_type", ParamType::String, "Grid"),
            decl("ins_gravY", ParamType::Real, "physics/IncompNS"),
            decl("mph_invWeber", ParamType::Real, "physics/Multiphase"),
            decl("nend", ParamType::Integer, "Driver"),
        ]
    }

    #[test]
    fn empty_toml_gives_only_headers() {
        assert_eq!(
            generate_parfile("", &schema()).unwrap(),
            "# Grid\n\n# IncompNS\n\n# Multiphase\n\n# Driver\n"
        );
    }

    #[test]
    fn values_land_under_their_unit() {
        let text = "[Multiphase]\nmph_invWeber = 0.004\n[Grid]\nxmin = 0.0\nxl_boundary_type = \"inflow_ins\"\n";
        let out = generate_parfile(text, &schema()).unwrap();
        assert_eq!(
            out,
            "# Grid\nxl_boundary_type = \"inflow_ins\"\nxmin = 0.0\n\n# IncompNS\n\n# Multiphase\nmph_invWeber = 0.004\n\n# Driver\n"
        );
    }

    #[test]
    fn wrong_and_unknown_tables_rejected() {
        let err = generate_parfile("[Grid]\nins_gravY = -0.01\n", &schema()).unwrap_err();
        assert_eq!(
            err,
            ParamError::WrongUnit { param: "ins_gravY".into(), table: "Grid".into(), owner: "IncompNS".into() }
        );
        assert_eq!(
            generate_parfile("[Mesh]\n", &schema()).unwrap_err(),
            ParamError::UnknownUnit("Mesh".into())
        );
        assert!(matches!(
            generate_parfile("[Driver]\nnend = [1, 2]\n", &schema()),
            Err(ParamError::UnsupportedToml(_))
        ));
    }

    #[test]
    fn generated_parfile_validates_like_direct_ingestion() {
        let text = "[Driver]\nnend = 7\n[IncompNS]\nins_gravY = -1\n";
        let par = generate_parfile(text, &schema()).unwrap();
        let a = ParameterSet::validate(&parse_parfile(&par).unwrap(), &schema()).unwrap();
        let b = ParameterSet::validate(&ingest_toml(text, &schema()).unwrap(), &schema()).unwrap();
        assert_eq!(a, b);
    }
}
