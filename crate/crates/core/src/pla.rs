//! Espresso-style PLA subset: `.i`, `.o`, optional `.p`, `.ilb`, `.ob`,
//! `.type f`/`.type fd`, cube lines and `.e`.
//!
//! Input columns take `0`, `1` or `-`; output columns take `1` (asserted),
//! `0` (explicitly low) or `~`/`-` (unspecified). Outputs not asserted by
//! any matching cube read as 0.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::oracle::Oracle;

const FMT: &str = "PLA";

#[derive(Clone, Copy, Debug)]
struct Cube {
    care: u64,
    value: u64,
    on: u64,
    off: u64,
    line: usize,
}

fn directive_num(line: usize, tok: Option<&str>, what: &str) -> Result<usize> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(FMT, line, 1, format!("`{what}` needs a count")))
}

pub fn parse_pla(text: &str) -> Result<Oracle> {
    let mut ni: Option<usize> = None;
    let mut no: Option<usize> = None;
    let mut declared_p: Option<(usize, usize)> = None;
    let mut cubes: Vec<Cube> = Vec::new();
    let mut ended = false;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if ended {
            return Err(Error::parse(FMT, line, 1, "content after `.e`"));
        }
        let mut toks = body.split_whitespace();
        let head = toks.next().unwrap();
        if head.starts_with('.') {
            match head {
                ".i" => ni = Some(directive_num(line, toks.next(), ".i")?),
                ".o" => no = Some(directive_num(line, toks.next(), ".o")?),
                ".p" => declared_p = Some((directive_num(line, toks.next(), ".p")?, line)),
                ".ilb" | ".ob" => {}
                ".type" => match toks.next() {
                    Some("f") | Some("fd") => {}
                    other => {
                        return Err(Error::Unsupported {
                            format: FMT,
                            construct: format!(".type {}", other.unwrap_or("")),
                            line,
                        })
                    }
                },
                ".e" | ".end" => ended = true,
                d => {
                    return Err(Error::parse(
                        FMT,
                        line,
                        1,
                        format!("unknown directive `{d}`"),
                    ))
                }
            }
            continue;
        }
        let (Some(ni), Some(no)) = (ni, no) else {
            return Err(Error::parse(FMT, line, 1, "cube before `.i`/`.o`"));
        };
        // inputs and outputs may be written with or without a separating space
        let compact: String = body.split_whitespace().collect();
        if compact.chars().count() != ni + no {
            return Err(Error::parse(
                FMT,
                line,
                1,
                format!(
                    "cube has {} columns, expected {} inputs + {} outputs",
                    compact.chars().count(),
                    ni,
                    no
                ),
            ));
        }
        let col_of = |k: usize| -> usize {
            // column in the raw line of the k-th non-space character
            raw.char_indices()
                .filter(|(_, c)| !c.is_whitespace())
                .nth(k)
                .map(|(b, _)| raw[..b].chars().count() + 1)
                .unwrap_or(1)
        };
        let mut cube = Cube {
            care: 0,
            value: 0,
            on: 0,
            off: 0,
            line,
        };
        for (k, c) in compact.chars().enumerate() {
            if k < ni {
                match c {
                    '0' => cube.care |= 1 << k,
                    '1' => {
                        cube.care |= 1 << k;
                        cube.value |= 1 << k;
                    }
                    '-' => {}
                    _ => {
                        return Err(Error::parse(
                            FMT,
                            line,
                            col_of(k),
                            format!("invalid input character `{c}`"),
                        ))
                    }
                }
            } else {
                let j = k - ni;
                match c {
                    '1' => cube.on |= 1 << j,
                    '0' => cube.off |= 1 << j,
                    '~' | '-' => {}
                    _ => {
                        return Err(Error::parse(
                            FMT,
                            line,
                            col_of(k),
                            format!("invalid output character `{c}`"),
                        ))
                    }
                }
            }
        }
        cubes.push(cube);
    }

    let (Some(ni), Some(no)) = (ni, no) else {
        return Err(Error::parse(FMT, 1, 1, "missing `.i` or `.o`"));
    };
    if !(1..=64).contains(&ni) || !(1..=64).contains(&no) {
        return Err(Error::parse(FMT, 1, 1, "`.i` and `.o` must be in 1..=64"));
    }
    if let Some((p, line)) = declared_p {
        if p != cubes.len() {
            return Err(Error::parse(
                FMT,
                line,
                1,
                format!("`.p {p}` but {} cubes follow", cubes.len()),
            ));
        }
    }
    for (a_idx, a) in cubes.iter().enumerate() {
        for b in &cubes[a_idx + 1..] {
            let common = a.care & b.care;
            let overlap = (a.value ^ b.value) & common == 0;
            if overlap && (a.on & b.off | a.off & b.on) != 0 {
                return Err(Error::parse(
                    FMT,
                    b.line,
                    1,
                    format!("cube conflicts with overlapping cube on line {}", a.line),
                ));
            }
        }
    }
    let cubes: Arc<Vec<Cube>> = Arc::new(cubes);
    Oracle::from_fn("pla", ni, no, move |x| {
        cubes
            .iter()
            .filter(|c| x & c.care == c.value)
            .fold(0, |acc, c| acc | c.on)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::make_builtin;
    use crate::oracle::BoolFunction;

    #[test]
    fn identity_and_constant() {
        let id = parse_pla(".i 1\n.o 1\n1 1\n.e\n").unwrap();
        assert_eq!((id.eval_bits(0), id.eval_bits(1)), (0, 1));
        let one = parse_pla(".i 2\n.o 1\n-- 1\n.e\n").unwrap();
        assert!((0..4).all(|x| one.eval_bits(x) == 1));
    }

    #[test]
    fn majority_fixture_matches_builtin() {
        let text = ".i 3\n.o 1\n.p 3\n11- 1\n1-1 1\n-11 1\n.e\n";
        let pla = parse_pla(text).unwrap();
        let maj = make_builtin("majority", &[3]).unwrap();
        for x in 0..8 {
            assert_eq!(pla.eval_bits(x), maj.eval_bits(x));
        }
    }

    #[test]
    fn multi_output_with_unspecified() {
        let pla = parse_pla(".i 2\n.o 2\n1- 1~\n-1 ~1\n").unwrap();
        assert_eq!(
            (0..4).map(|x| pla.eval_bits(x)).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );
    }

    #[test]
    fn errors() {
        match parse_pla(".i 2\n.o 1\n1 1\n") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos.line, 3),
            other => panic!("{other:?}"),
        }
        match parse_pla(".i 2\n.o 1\n1- 1\n11 0\n") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos.line, 4),
            other => panic!("{other:?}"),
        }
        // disjoint cubes may disagree
        assert!(parse_pla(".i 2\n.o 1\n1- 1\n0- 0\n").is_ok());
        match parse_pla(".i 2\n.o 1\n1x 1\n") {
            Err(Error::Parse { pos, .. }) => assert_eq!((pos.line, pos.col), (3, 2)),
            other => panic!("{other:?}"),
        }
        assert!(parse_pla(".i 2\n.o 1\n.p 2\n11 1\n.e\n").is_err());
        assert!(parse_pla("11 1\n").is_err());
        assert!(matches!(
            parse_pla(".i 1\n.o 1\n.type fr\n"),
            Err(Error::Unsupported { .. })
        ));
    }
}
