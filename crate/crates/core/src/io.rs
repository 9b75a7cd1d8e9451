//! UAI `MARKOV` text format.
//!
//! Tables are read as additive potentials θ. With
//! [`ParseOptions::log_transform`] each entry `v` becomes `ln v` (zero maps
//! to [`LOG_ZERO`]) so probability tables can be ingested. `#` starts a comment
//! that runs to the end of the line.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{ParseError, ParseErrorKind};
use crate::model::PairwiseMrf;

/// Stand-in for `ln 0` under `--log-transform`.
pub const LOG_ZERO: f64 = -1e9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    pub log_transform: bool,
}

struct Token<'a> {
    text: &'a str,
    line: usize,
}

struct Tokens<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut tokens = Vec::new();
        let mut last_line = 1;
        for (n, line) in text.lines().enumerate() {
            last_line = n + 1;
            let content = line.split('#').next().unwrap_or("");
            tokens.extend(content.split_whitespace().map(|t| Token { text: t, line: n + 1 }));
        }
        Tokens { tokens, pos: 0, last_line }
    }

    fn next(&mut self) -> Result<&Token<'a>, ParseError> {
        let t = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| ParseError::new(self.last_line, ParseErrorKind::Truncated))?;
        self.pos += 1;
        Ok(t)
    }

    fn usize(&mut self) -> Result<(usize, usize), ParseError> {
        let t = self.next()?;
        t.text
            .parse()
            .map(|v| (v, t.line))
            .map_err(|_| ParseError::new(t.line, ParseErrorKind::NotNumeric(t.text.into())))
    }

    fn f64(&mut self) -> Result<(f64, usize), ParseError> {
        let t = self.next()?;
        match t.text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok((v, t.line)),
            _ => Err(ParseError::new(t.line, ParseErrorKind::NotNumeric(t.text.into()))),
        }
    }
}

enum Scope {
    Unary(usize),
    Pair(usize, usize),
}

/// Parses a UAI `MARKOV` model. Duplicate factors over the same scope are
/// summed; a pairwise factor listed as `(j, i)` after `(i, j)` is transposed
/// first. Edges keep the orientation and order of their first appearance.
pub fn parse_uai(text: &str, options: ParseOptions) -> Result<PairwiseMrf, ParseError> {
    let mut tok = Tokens::new(text);
    let header = tok.next()?;
    if header.text != "MARKOV" {
        return Err(ParseError::new(header.line, ParseErrorKind::NotMarkov(header.text.into())));
    }
    let (n, _) = tok.usize()?;
    let mut domains = Vec::with_capacity(n);
    for _ in 0..n {
        let (k, line) = tok.usize()?;
        if k == 0 {
            return Err(invalid(line, "cardinality must be positive"));
        }
        domains.push(k);
    }
    let (num_factors, _) = tok.usize()?;
    let mut scopes = Vec::with_capacity(num_factors);
    for _ in 0..num_factors {
        let (arity, line) = tok.usize()?;
        let mut vars = Vec::with_capacity(arity.min(2));
        if arity == 0 || arity > 2 {
            return Err(ParseError::new(line, ParseErrorKind::UnsupportedArity(arity)));
        }
        for _ in 0..arity {
            let (v, vline) = tok.usize()?;
            if v >= n {
                return Err(invalid(vline, &format!("variable {v} out of range (model has {n})")));
            }
            vars.push(v);
        }
        let scope = match vars[..] {
            [i] => Scope::Unary(i),
            [i, j] if i == j => return Err(invalid(line, &format!("pairwise factor repeats variable {i}"))),
            [i, j] => Scope::Pair(i, j),
            _ => unreachable!(),
        };
        scopes.push(scope);
    }

    let mut unary: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut pairs: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    let mut pair_index: HashMap<(usize, usize), usize> = HashMap::new();
    for scope in &scopes {
        let expected = match *scope {
            Scope::Unary(i) => domains[i],
            Scope::Pair(i, j) => domains[i] * domains[j],
        };
        let (count, line) = tok.usize()?;
        if count != expected {
            return Err(invalid(line, &format!("table has {count} entries, expected {expected}")));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let (v, vline) = tok.f64()?;
            values.push(transform(v, vline, options)?);
        }
        match *scope {
            Scope::Unary(i) => match &mut unary[i] {
                Some(existing) => existing.iter_mut().zip(&values).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(values),
            },
            Scope::Pair(i, j) => match pair_index.get(&(i.min(j), i.max(j))) {
                Some(&e) => {
                    let (a, _, table) = &mut pairs[e];
                    if *a == i {
                        table.iter_mut().zip(&values).for_each(|(t, v)| *t += v);
                    } else {
                        let (ki, kj) = (domains[i], domains[j]);
                        // `values` is ki × kj over (i, j); the stored table is kj × ki.
                        for r in 0..ki {
                            for c in 0..kj {
                                table[c * ki + r] += values[r * kj + c];
                            }
                        }
                    }
                }
                None => {
                    pair_index.insert((i.min(j), i.max(j)), pairs.len());
                    pairs.push((i, j, values));
                }
            },
        }
    }
    if let Some(extra) = tok.tokens.get(tok.pos) {
        return Err(invalid(extra.line, &format!("unexpected trailing token {:?}", extra.text)));
    }

    let build = |line: usize| {
        move |e: crate::error::MrfError| invalid(line, &e.to_string())
    };
    let mut mrf = PairwiseMrf::new(domains).map_err(build(tok.last_line))?;
    for (i, j, table) in pairs {
        mrf.add_edge(i, j, table).map_err(build(tok.last_line))?;
    }
    for (i, u) in unary.into_iter().enumerate() {
        if let Some(u) = u {
            mrf.set_unary(i, u).map_err(build(tok.last_line))?;
        }
    }
    Ok(mrf)
}

fn transform(v: f64, line: usize, options: ParseOptions) -> Result<f64, ParseError> {
    if !options.log_transform {
        return Ok(v);
    }
    if v < 0.0 {
        return Err(invalid(line, &format!("cannot take the log of negative entry {v}")));
    }
    Ok(if v == 0.0 { LOG_ZERO } else { v.ln() })
}

fn invalid(line: usize, msg: &str) -> ParseError {
    ParseError::new(line, ParseErrorKind::Invalid(msg.into()))
}

/// Canonical serialization: pairwise factors in edge order, then unary
/// factors in node order. Values use 17 significant digits.
pub fn write_uai(mrf: &PairwiseMrf) -> String {
    let mut out = String::from("MARKOV\n");
    let _ = writeln!(out, "{}", mrf.num_nodes());
    let cards: Vec<String> = mrf.domains().iter().map(|k| k.to_string()).collect();
    let _ = writeln!(out, "{}", cards.join(" "));
    let unaries: Vec<usize> = (0..mrf.num_nodes()).filter(|&i| mrf.unary(i).is_some()).collect();
    let _ = writeln!(out, "{}", mrf.num_edges() + unaries.len());
    for e in mrf.edges() {
        let _ = writeln!(out, "2 {} {}", e.i, e.j);
    }
    for &i in &unaries {
        let _ = writeln!(out, "1 {i}");
    }
    let mut table = |values: &[f64]| {
        let _ = writeln!(out, "\n{}", values.len());
        let vals: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", vals.join(" "));
    };
    for e in 0..mrf.num_edges() {
        table(mrf.table(e));
    }
    for &i in &unaries {
        table(mrf.unary(i).expect("filtered above"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_NODE: &str = "MARKOV\n2\n2 2\n1\n2 0 1\n\n4\n2 0 0 1\n";

    #[test]
    fn parses_two_node_example() {
        let m = parse_uai(TWO_NODE, ParseOptions::default()).unwrap();
        assert_eq!(m.domains(), &[2, 2]);
        assert_eq!(m.num_edges(), 1);
        assert_eq!(m.table(0), &[2.0, 0.0, 0.0, 1.0]);
        assert!(!m.has_unaries());
    }

    #[test]
    fn comments_and_whitespace_are_ignored() {
        let text = "# header\nMARKOV   # format\n2 2\t2 1 2 0 1 # scope\n4 2 0\n0 1";
        let m = parse_uai(text, ParseOptions::default()).unwrap();
        assert_eq!(m.table(0), &[2.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn rejects_malformed_input() {
        let err = parse_uai("BAYES\n2\n", ParseOptions::default()).unwrap_err();
        assert_eq!(err, ParseError::new(1, ParseErrorKind::NotMarkov("BAYES".into())));

        let err = parse_uai("MARKOV\n3\n2 2 2\n1\n3 0 1 2\n8\n0 0 0 0 0 0 0 0\n", ParseOptions::default())
            .unwrap_err();
        assert_eq!(err, ParseError::new(5, ParseErrorKind::UnsupportedArity(3)));

        let err = parse_uai("MARKOV\n2\n2 2\n1\n2 0 1\n\n4\n2 0 0\n", ParseOptions::default()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Truncated);

        let err = parse_uai("MARKOV\n2\n2 2\n1\n2 0 1\n\n4\n2 x 0 1\n", ParseOptions::default()).unwrap_err();
        assert_eq!(err, ParseError::new(8, ParseErrorKind::NotNumeric("x".into())));

        let err = parse_uai("MARKOV\n2\n2 2\n1\n2 0 1\n\n3\n2 0 0\n", ParseOptions::default()).unwrap_err();
        assert_eq!(err.line, 7);
        assert!(matches!(err.kind, ParseErrorKind::Invalid(_)));

        let err = parse_uai("MARKOV\n2\n2 2\n1\n2 0 5\n", ParseOptions::default()).unwrap_err();
        assert_eq!(err.line, 5);
    }

    #[test]
    fn duplicate_scopes_are_summed_and_transposed() {
        let text = "MARKOV\n2\n2 3\n3\n2 0 1\n2 1 0\n1 1\n\
                    6\n1 2 3 4 5 6\n6\n10 20 30 40 50 60\n3\n0.5 0.5 0.5\n";
        let m = parse_uai(text, ParseOptions::default()).unwrap();
        assert_eq!(m.edges()[0].i, 0);
        // Second table is 3×2 over (1, 0): entry (x1, x0) at x1·2 + x0.
        assert_eq!(m.table(0), &[11.0, 32.0, 53.0, 24.0, 45.0, 66.0]);
        assert_eq!(m.unary(1).unwrap(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn log_transform_maps_zero() {
        let m = parse_uai(TWO_NODE, ParseOptions { log_transform: true }).unwrap();
        assert_eq!(m.table(0), &[2f64.ln(), LOG_ZERO, LOG_ZERO, 0.0]);
        let neg = "MARKOV\n2\n2 2\n1\n2 0 1\n4\n-1 0 0 1\n";
        assert!(parse_uai(neg, ParseOptions { log_transform: true }).is_err());
    }

    #[test]
    fn writer_is_canonical() {
        let m = parse_uai(TWO_NODE, ParseOptions::default()).unwrap();
        let text = write_uai(&m);
        assert_eq!(
            text,
            "MARKOV\n2\n2 2\n1\n2 0 1\n\n4\n\
             2.0000000000000000e0 0.0000000000000000e0 0.0000000000000000e0 1.0000000000000000e0\n"
        );
        assert_eq!(parse_uai(&text, ParseOptions::default()).unwrap(), m);
    }

    #[test]
    fn unaries_only() {
        let mut m = PairwiseMrf::new(vec![3]).unwrap();
        m.set_unary(0, vec![0.1, -0.2, 0.3]).unwrap();
        let text = write_uai(&m);
        assert!(text.starts_with("MARKOV\n1\n3\n1\n1 0\n"));
        assert_eq!(parse_uai(&text, ParseOptions::default()).unwrap(), m);
    }
}
