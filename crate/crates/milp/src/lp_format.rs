//! CPLEX LP text export.

use std::collections::HashSet;
use std::fmt::Write;

use crate::model::{MilpModel, Sense};
use crate::scalar::Scalar;

fn number<T: Scalar>(v: &T) -> String {
    v.decimal_text().unwrap_or_else(|| format!("{:e}", v.to_f64_lossy()))
}

fn valid_name(s: &str) -> bool {
    let mut chars = s.chars();
    let Some(first) = chars.next() else { return false };
    let ok = |c: char| c.is_ascii_alphanumeric() || "_.[]{}!\"#$%&()/,;?@'`|~".contains(c);
    s.len() <= 255
        && !first.is_ascii_digit()
        && first != '.'
        && !matches!(first, 'e' | 'E')
        && ok(first)
        && chars.all(ok)
}

fn unique_names<'a>(names: impl Iterator<Item = &'a str>, prefix: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    names
        .enumerate()
        .map(|(i, n)| {
            let name = if valid_name(n) && !seen.contains(n) { n.to_string() } else { format!("{prefix}{i}") };
            seen.insert(name.clone());
            name
        })
        .collect()
}

fn write_terms<T: Scalar>(out: &mut String, terms: impl Iterator<Item = (usize, T)>, names: &[String]) {
    let mut empty = true;
    for (j, a) in terms {
        if a.is_zero() {
            continue;
        }
        let sign = if a < T::zero() { "-" } else { "+" };
        if empty && sign == "+" {
            let _ = write!(out, " {} {}", number(&a.abs()), names[j]);
        } else {
            let _ = write!(out, " {} {} {}", sign, number(&a.abs()), names[j]);
        }
        empty = false;
    }
    if empty {
        let _ = write!(out, " 0 {}", names.first().map(String::as_str).unwrap_or("x0"));
    }
}

/// Renders `model` in LP file syntax.
pub fn to_lp_format<T: Scalar>(model: &MilpModel<T>) -> String {
    let vnames = unique_names(model.vars().iter().map(|v| v.name.as_str()), "x");
    let rnames = unique_names(model.rows().iter().map(|r| r.name.as_str()), "c");
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", model.name);
    out.push_str("Minimize\n obj:");
    write_terms(&mut out, model.objective().iter().cloned().enumerate(), &vnames);
    if !model.offset().is_zero() {
        let _ = write!(out, " + {} __offset", number(model.offset()));
    }
    out.push_str("\nSubject To\n");
    for (row, name) in model.rows().iter().zip(&rnames) {
        let _ = write!(out, " {name}:");
        write_terms(&mut out, row.terms.iter().map(|(v, a)| (v.0, a.clone())), &vnames);
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", number(&row.rhs));
    }
    if !model.offset().is_zero() {
        out.push_str(" __offset_fix: __offset = 1\n");
    }
    out.push_str("Bounds\n");
    for (v, name) in model.vars().iter().zip(&vnames) {
        if v.binary {
            continue;
        }
        match (&v.lower, &v.upper) {
            (Some(l), Some(u)) if l == u => {
                let _ = writeln!(out, " {name} = {}", number(l));
            }
            (Some(l), Some(u)) => {
                let _ = writeln!(out, " {} <= {name} <= {}", number(l), number(u));
            }
            (Some(l), None) => {
                if !l.is_zero() {
                    let _ = writeln!(out, " {name} >= {}", number(l));
                }
            }
            (None, Some(u)) => {
                let _ = writeln!(out, " -inf <= {name} <= {}", number(u));
            }
            (None, None) => {
                let _ = writeln!(out, " {name} free");
            }
        }
    }
    let bins: Vec<&String> = model.vars().iter().zip(&vnames).filter(|(v, _)| v.binary).map(|(_, n)| n).collect();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        for chunk in bins.chunks(8) {
            out.push(' ');
            out.push_str(&chunk.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" "));
            out.push('\n');
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_sections() {
        let mut m: MilpModel<f64> = MilpModel::new("demo");
        let x = m.add_binary("x");
        let y = m.add_var("y", None, Some(4.5));
        let z = m.add_var("2bad name", None, None);
        m.set_obj(x, 3.0);
        m.set_obj(y, -1.0);
        m.add_row("r1", vec![(x, 1.0), (y, -2.0)], Sense::Ge, -1.0);
        m.add_row("r1", vec![(z, 1.0)], Sense::Eq, 0.25);
        let lp = to_lp_format(&m);
        assert!(lp.contains("Minimize\n obj: 3 x - 1 y"));
        assert!(lp.contains(" r1: 1 x - 2 y >= -1"));
        assert!(lp.contains(" c1: 1 x2 = 0.25"));
        assert!(lp.contains(" -inf <= y <= 4.5"));
        assert!(lp.contains(" x2 free"));
        assert!(lp.contains("Binaries\n x\n"));
        assert!(lp.ends_with("End\n"));
    }
}
