//! SDPA sparse format (`.dat-s`) export and import.
//!
//! The written problem is the margin maximization
//!
//! ```text
//! minimize  -t   subject to   Σ zᵢ Fᵢ - t·I - (-F₀) ⪰ 0,   zᵢ ≥ 0 (sign-constrained)
//! ```
//!
//! in SDPA's `Σ xᵢFᵢ - F₀ ⪰ 0` convention, so the SDPA `F₀` is the negated
//! pencil constant. Sign constraints go into one trailing diagonal (LP)
//! block. Comment lines (`*`) carry the variable registry so a parse
//! restores the pencil exactly; values are written in shortest
//! round-trip form.

use std::fmt::Write as _;

use super::pencil::{AffinePencil, PencilBuilder, Sign};
use crate::error::{Error, Result};

/// Serialize `pencil`, optionally recording a point `z` in the comments.
pub fn write_sdpa(pencil: &AffinePencil, point: Option<&[f64]>) -> Result<String> {
    pencil.validate()?;
    if let Some(z) = point {
        pencil.check_len(z)?;
    }
    let n = pencil.num_vars();
    let m = n + 1;
    let margin_idx = m; // 1-based index of t
    let signed: Vec<usize> = (0..n).filter(|&i| pencil.vars[i].sign != Sign::Free).collect();
    let nblocks = pencil.blocks.len() + usize::from(!signed.is_empty());

    let mut out = String::new();
    writeln!(out, "* nncert pencil export").unwrap();
    for (i, v) in pencil.vars.iter().enumerate() {
        writeln!(out, "* var {} {} {}", i + 1, v.sign.name(), v.name).unwrap();
    }
    writeln!(out, "* margin {margin_idx}").unwrap();
    if let Some(z) = point {
        for (i, x) in z.iter().enumerate() {
            writeln!(out, "* point {} {:e}", i + 1, x).unwrap();
        }
    }
    writeln!(out, "{m}").unwrap();
    writeln!(out, "{nblocks}").unwrap();
    let mut dims: Vec<String> = pencil.blocks.iter().map(|b| b.dim.to_string()).collect();
    if !signed.is_empty() {
        dims.push(format!("-{}", signed.len()));
    }
    writeln!(out, "{}", dims.join(" ")).unwrap();
    let c: Vec<String> = (0..m).map(|i| if i == n { "-1".into() } else { "0".into() }).collect();
    writeln!(out, "{}", c.join(" ")).unwrap();

    for (b, blk) in pencil.blocks.iter().enumerate() {
        for r in 0..blk.dim {
            for s in r..blk.dim {
                let v = blk.constant[(r, s)];
                if v != 0.0 {
                    writeln!(out, "0 {} {} {} {:e}", b + 1, r + 1, s + 1, -v).unwrap();
                }
            }
        }
    }
    for (b, blk) in pencil.blocks.iter().enumerate() {
        for t in &blk.terms {
            writeln!(out, "{} {} {} {} {:e}", t.var + 1, b + 1, t.row + 1, t.col + 1, t.value).unwrap();
        }
        for r in 0..blk.dim {
            writeln!(out, "{margin_idx} {} {} {} -1", b + 1, r + 1, r + 1).unwrap();
        }
    }
    if !signed.is_empty() {
        let lp = pencil.blocks.len() + 1;
        for (k, &i) in signed.iter().enumerate() {
            writeln!(out, "{} {lp} {} {} 1", i + 1, k + 1, k + 1).unwrap();
        }
    }
    Ok(out)
}

/// A parsed `.dat-s` file.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpaProblem {
    pub pencil: AffinePencil,
    pub point: Option<Vec<f64>>,
}

/// Parse a file produced by [`write_sdpa`]. Files from other tools are
/// accepted too: without registry comments every variable is free and
/// named `x[i]`, and diagonal (LP) blocks become nonnegativity constraints
/// when a variable appears with coefficient 1 alone on its diagonal slot.
pub fn parse_sdpa(text: &str) -> Result<SdpaProblem> {
    let mut names: Vec<(usize, Sign, String)> = Vec::new();
    let mut margin: Option<usize> = None;
    let mut point: Vec<(usize, f64)> = Vec::new();
    let mut data: Vec<&str> = Vec::new();

    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('*').or_else(|| line.strip_prefix('"')) {
            let mut it = rest.split_whitespace();
            match it.next() {
                Some("var") => {
                    let idx = parse_usize(it.next(), "var index")?;
                    let sign = it
                        .next()
                        .and_then(Sign::parse)
                        .ok_or_else(|| Error::Parse(format!("bad sign in {line:?}")))?;
                    let name = it.collect::<Vec<_>>().join(" ");
                    names.push((idx, sign, name));
                }
                Some("margin") => margin = Some(parse_usize(it.next(), "margin index")?),
                Some("point") => {
                    let idx = parse_usize(it.next(), "point index")?;
                    point.push((idx, parse_f64(it.next(), "point value")?));
                }
                _ => {}
            }
            continue;
        }
        data.push(line);
    }

    // Header: m, nblocks, block sizes, objective. Trailing annotations such
    // as "=mDIM" are ignored; sizes and objective may span lines.
    let mut lines = data.into_iter();
    let mut header_numbers = |count: usize, what: &str| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("truncated {what}")))?;
            let before = out.len();
            for t in split_header(line) {
                if out.len() == count {
                    break;
                }
                match t.parse::<f64>() {
                    Ok(v) => out.push(v),
                    Err(_) if out.len() > before => break,
                    Err(_) => return Err(Error::Parse(format!("bad {what} token {t:?}"))),
                }
            }
            if count == 1 {
                break;
            }
        }
        Ok(out)
    };
    let m = as_count(header_numbers(1, "m")?[0], "m")?;
    let nblocks = as_count(header_numbers(1, "nblocks")?[0], "nblocks")?;
    let dims: Vec<i64> = header_numbers(nblocks, "block sizes")?
        .into_iter()
        .map(|v| {
            if v.fract() == 0.0 && v != 0.0 {
                Ok(v as i64)
            } else {
                Err(Error::Parse(format!("bad block size {v}")))
            }
        })
        .collect::<Result<_>>()?;
    let _objective = header_numbers(m, "objective")?;

    let margin_var = margin.map(|k| k - 1);
    let n = if margin_var.is_some() { m - 1 } else { m };
    let mut b = PencilBuilder::new();
    if names.is_empty() {
        for i in 0..n {
            b.add_var(format!("x[{i}]"), Sign::Free);
        }
    } else {
        names.sort_by_key(|(i, _, _)| *i);
        if names.len() != n || names.iter().enumerate().any(|(k, (i, _, _))| *i != k + 1) {
            return Err(Error::Parse("variable registry does not match m".into()));
        }
        for (_, sign, name) in &names {
            b.add_var(name.clone(), *sign);
        }
    }
    let sdp_blocks: Vec<(usize, usize)> = dims
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 0)
        .map(|(k, d)| (k, *d as usize))
        .collect();
    let mut block_map = vec![None; nblocks];
    for (k, dim) in &sdp_blocks {
        block_map[*k] = Some(b.add_block(*dim));
    }
    let mut lp_entries: Vec<(usize, usize, f64)> = Vec::new();

    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(Error::Parse(format!("bad entry line {line:?}")));
        }
        let mat = parse_usize(Some(f[0]), "matno")?;
        let blk = parse_usize(Some(f[1]), "blkno")?;
        let r = parse_usize(Some(f[2]), "row")?;
        let s = parse_usize(Some(f[3]), "col")?;
        let v = parse_f64(Some(f[4]), "value")?;
        if blk == 0 || blk > nblocks || r == 0 || s == 0 || mat > m {
            return Err(Error::Parse(format!("entry out of range {line:?}")));
        }
        let size = dims[blk - 1].unsigned_abs() as usize;
        if r > size || s > size {
            return Err(Error::Parse(format!("entry outside its block {line:?}")));
        }
        match block_map[blk - 1] {
            Some(target) => {
                if mat == 0 {
                    b.add_constant(target, r - 1, s - 1, -v);
                } else if Some(mat - 1) == margin_var {
                    // margin column: -I in every SDP block
                } else {
                    b.add_term(target, mat - 1, r - 1, s - 1, v);
                }
            }
            None => {
                if mat > 0 && r == s {
                    lp_entries.push((mat - 1, r - 1, v));
                }
            }
        }
    }
    if names.is_empty() {
        let mut p = b.build();
        for (var, _, v) in lp_entries {
            if v == 1.0 && var < n {
                p.vars[var].sign = Sign::Nonneg;
            }
        }
        return finish(p, point, n);
    }
    finish(b.build(), point, n)
}

fn finish(pencil: AffinePencil, mut point: Vec<(usize, f64)>, n: usize) -> Result<SdpaProblem> {
    let point = if point.is_empty() {
        None
    } else {
        point.sort_by_key(|(i, _)| *i);
        if point.len() != n || point.iter().enumerate().any(|(k, (i, _))| *i != k + 1) {
            return Err(Error::Parse("stored point does not cover every variable".into()));
        }
        Some(point.into_iter().map(|(_, v)| v).collect())
    };
    Ok(SdpaProblem { pencil, point })
}

fn split_header(line: &str) -> Vec<String> {
    line.split(|c: char| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '(' | ')'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::Parse(format!("bad {what}: {v}")))
    }
}

fn parse_usize(s: Option<&str>, what: &str) -> Result<usize> {
    s.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad {what}: {s:?}")))
}

fn parse_f64(s: Option<&str>, what: &str) -> Result<f64> {
    s.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad {what}: {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> AffinePencil {
        let mut b = PencilBuilder::new();
        let x = b.add_var("x", Sign::Free);
        let y = b.add_var("lambda", Sign::Nonneg);
        let blk = b.add_block(2);
        b.add_constant(blk, 1, 1, 1.0);
        b.add_term(blk, x, 0, 0, 1.0);
        b.add_term(blk, x, 1, 1, -1.0);
        b.add_term(blk, y, 0, 1, 0.1);
        b.build()
    }

    #[test]
    fn layout_of_written_file() {
        let s = write_sdpa(&tiny(), None).unwrap();
        let data: Vec<&str> = s.lines().filter(|l| !l.starts_with('*')).collect();
        assert_eq!(data[0], "3");
        assert_eq!(data[1], "2");
        assert_eq!(data[2], "2 -1");
        assert_eq!(data[3], "0 0 -1");
        assert!(data.contains(&"0 1 2 2 -1e0"));
        assert!(data.contains(&"2 2 1 1 1"));
    }

    #[test]
    fn roundtrip_restores_pencil_and_point() {
        let p = tiny();
        let z = [0.3, 1.0 / 3.0];
        let parsed = parse_sdpa(&write_sdpa(&p, Some(&z)).unwrap()).unwrap();
        assert_eq!(parsed.pencil, p);
        assert_eq!(parsed.point.as_deref(), Some(&z[..]));
    }

    #[test]
    fn foreign_file_without_registry() {
        let text = "\"plain file\n2 =mDIM\n1\n2\n0 0\n0 1 1 1 -1\n1 1 1 1 1\n2 1 2 2 1\n";
        let parsed = parse_sdpa(text).unwrap();
        assert_eq!(parsed.pencil.num_vars(), 2);
        assert_eq!(parsed.pencil.blocks[0].constant[(0, 0)], 1.0);
    }

    #[test]
    fn malformed_entry_rejected() {
        let text = "1\n1\n2\n0\n1 1 3 3 1\n";
        assert!(parse_sdpa(text).is_err());
    }
}
