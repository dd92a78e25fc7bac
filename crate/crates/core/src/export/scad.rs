//! Parser for the OpenSCAD subset the exporter writes.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Bool(bool),
    Vector(Vec<Expr>),
    Ident(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Arg {
    pub name: Option<String>,
    pub value: Expr,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    Assign {
        name: String,
        value: Expr,
    },
    Call {
        name: String,
        args: Vec<Arg>,
        children: Vec<Stmt>,
        offset: usize,
    },
}

/// Modules the linter accepts.
pub const MODULES: [&str; 11] = [
    "union",
    "difference",
    "intersection",
    "translate",
    "scale",
    "rotate",
    "multmatrix",
    "sphere",
    "cube",
    "cylinder",
    "polyhedron",
];

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Punct(char),
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Scad {
        offset,
        message: message.into(),
    })
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if src[i..].starts_with("//") {
            i = src[i..].find('\n').map_or(bytes.len(), |n| i + n);
        } else if src[i..].starts_with("/*") {
            match src[i + 2..].find("*/") {
                Some(n) => i += n + 4,
                None => return err(i, "unterminated block comment"),
            }
        } else if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$')
            {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' {
            let start = i;
            i += 1;
            while i < bytes.len() {
                let d = bytes[i] as char;
                let exp_sign = (d == '-' || d == '+') && matches!(bytes[i - 1], b'e' | b'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            match src[start..i].parse::<f64>() {
                Ok(v) if v.is_finite() => out.push((Tok::Num(v), start)),
                _ => return err(start, format!("bad number {:?}", &src[start..i])),
            }
        } else if "()[]{},;=".contains(c) {
            out.push((Tok::Punct(c), i));
            i += 1;
        } else {
            return err(i, format!("unexpected character {c:?}"));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.1)
    }

    fn is_punct(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Punct(c))
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.is_punct(c) {
            self.pos += 1;
            Ok(())
        } else {
            err(self.offset(), format!("expected {c:?}"))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => err(self.offset(), "expected identifier"),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let at = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(match s.as_str() {
                    "true" => Expr::Bool(true),
                    "false" => Expr::Bool(false),
                    _ => Expr::Ident(s),
                })
            }
            Some(Tok::Punct('[')) => {
                self.pos += 1;
                let mut items = Vec::new();
                while !self.is_punct(']') {
                    items.push(self.expr()?);
                    if !self.is_punct(']') {
                        self.expect(',')?;
                    }
                }
                self.pos += 1;
                Ok(Expr::Vector(items))
            }
            _ => err(at, "expected expression"),
        }
    }

    fn args(&mut self) -> Result<Vec<Arg>> {
        self.expect('(')?;
        let mut out = Vec::new();
        while !self.is_punct(')') {
            let named = matches!(self.peek(), Some(Tok::Ident(_)))
                && self.toks.get(self.pos + 1).map(|t| &t.0) == Some(&Tok::Punct('='));
            let name = if named {
                let n = self.ident()?;
                self.expect('=')?;
                Some(n)
            } else {
                None
            };
            out.push(Arg {
                name,
                value: self.expr()?,
            });
            if !self.is_punct(')') {
                self.expect(',')?;
            }
        }
        self.pos += 1;
        Ok(out)
    }

    fn statement(&mut self) -> Result<Stmt> {
        let offset = self.offset();
        let name = self.ident()?;
        if self.is_punct('=') {
            self.pos += 1;
            let value = self.expr()?;
            self.expect(';')?;
            return Ok(Stmt::Assign { name, value });
        }
        let args = self.args()?;
        let children = if self.is_punct(';') {
            self.pos += 1;
            Vec::new()
        } else if self.is_punct('{') {
            self.pos += 1;
            let mut body = Vec::new();
            while !self.is_punct('}') {
                if self.peek().is_none() {
                    return err(self.end, "unclosed block");
                }
                body.push(self.statement()?);
            }
            self.pos += 1;
            body
        } else {
            vec![self.statement()?]
        };
        Ok(Stmt::Call {
            name,
            args,
            children,
            offset,
        })
    }
}

/// Parses a script into statements.
pub fn parse(src: &str) -> Result<Vec<Stmt>> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        end: src.len(),
    };
    let mut out = Vec::new();
    while p.peek().is_some() {
        out.push(p.statement()?);
    }
    Ok(out)
}

fn check(stmts: &[Stmt]) -> Result<()> {
    for s in stmts {
        if let Stmt::Call {
            name,
            children,
            offset,
            args,
        } = s
        {
            if !MODULES.contains(&name.as_str()) {
                return err(*offset, format!("unknown module {name}"));
            }
            let solid = matches!(name.as_str(), "sphere" | "cube" | "cylinder" | "polyhedron");
            if solid && !children.is_empty() {
                return err(*offset, format!("{name} takes no children"));
            }
            if solid && args.is_empty() {
                return err(*offset, format!("{name} needs arguments"));
            }
            check(children)?;
        }
    }
    Ok(())
}

/// Grammar check plus a whitelist of modules and basic arity rules.
pub fn lint(src: &str) -> Result<()> {
    check(&parse(src)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_nested_blocks_and_comments() {
        let src = "// d2csg: x\n$fn = 96;\n/* block */ difference() { union() { translate([0, -1.5e-3, 2]) sphere(r=1); } union() {} }";
        lint(src).unwrap();
        let stmts = parse(src).unwrap();
        assert_eq!(stmts.len(), 2);
        assert_eq!(
            stmts[0],
            Stmt::Assign {
                name: "$fn".into(),
                value: Expr::Num(96.0)
            }
        );
    }

    #[test]
    fn single_child_without_braces() {
        let stmts = parse("scale([1,2,3]) cube(1, center=true);").unwrap();
        let Stmt::Call { children, .. } = &stmts[0] else {
            panic!()
        };
        assert_eq!(children.len(), 1);
    }

    #[test]
    fn rejects_malformed_scripts() {
        for bad in [
            "union() {",
            "sphere(r=1)",
            "cube([1,2);",
            "sphere(r=1) { cube(1); }",
            "frobnicate();",
            "sphere(r=1e999);",
            "/* open",
            "sphere(r=#1);",
        ] {
            assert!(lint(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn error_offset_points_at_the_problem() {
        match lint("union() { cube(1); }\nbogus(1);") {
            Err(Error::Scad { offset, .. }) => assert_eq!(offset, 21),
            other => panic!("{other:?}"),
        }
    }
}
