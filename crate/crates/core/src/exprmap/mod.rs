//! Expression front end: parse user-written component expressions and
//! evaluate them with exact first and second derivatives.
//!
//! The language is deliberately tiny — variables, literals, `+ - * /`, unary
//! minus, integer powers, and the functions `sin cos tan exp log sqrt atan` —
//! because the immersions of interest are elementary closed forms. Angles are
//! radians throughout. Derivatives come from second-order forward jets
//! ([`Jet2`]), not finite differences, so downstream second-fundamental-form
//! computations are exact to round-off.

mod jet;
mod lexer;
mod parser;

pub use jet::Jet2;

use crate::error::{Error, Result};
use crate::{DMat, DVec};

/// Scalar functions available in the expression language.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Atan,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "atan" => Func::Atan,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
        }
    }
}

/// Abstract syntax tree node. Variables are indices into the parameter list.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Neg(Box<Node>),
    Pow(Box<Node>, i32),
    Func(Func, Box<Node>),
}

/// A parsed expression together with its ordered parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    params: Vec<String>,
}

/// Parse `source` against the ordered variable names `params`.
pub fn parse(source: &str, params: &[&str]) -> Result<Expression> {
    if source.trim().is_empty() {
        return Err(Error::Syntax {
            line: 1,
            col: 1,
            message: "empty expression".into(),
        });
    }
    let params: Vec<String> = params.iter().map(|s| s.to_string()).collect();
    let root = parser::parse_nodes(source, &params)?;
    Ok(Expression { root, params })
}

impl Expression {
    /// Constant expression (no free variables needed).
    pub fn constant(value: f64, params: &[&str]) -> Expression {
        Expression {
            root: Node::Const(value),
            params: params.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Expression `params[index]`.
    pub fn variable(index: usize, params: &[&str]) -> Expression {
        assert!(index < params.len());
        Expression {
            root: Node::Var(index),
            params: params.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// True when no variable occurs in the tree.
    pub fn is_constant(&self) -> bool {
        fn walk(node: &Node) -> bool {
            match node {
                Node::Const(_) => true,
                Node::Var(_) => false,
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    walk(a) && walk(b)
                }
                Node::Neg(a) | Node::Func(_, a) => walk(a),
                Node::Pow(a, _) => walk(a),
            }
        }
        walk(&self.root)
    }

    /// Sum of two expressions over the same parameter list.
    pub fn add(&self, rhs: &Expression) -> Expression {
        assert_eq!(self.params, rhs.params);
        Expression {
            root: Node::Add(Box::new(self.root.clone()), Box::new(rhs.root.clone())),
            params: self.params.clone(),
        }
    }

    /// Product of two expressions over the same parameter list.
    pub fn mul(&self, rhs: &Expression) -> Expression {
        assert_eq!(self.params, rhs.params);
        Expression {
            root: Node::Mul(Box::new(self.root.clone()), Box::new(rhs.root.clone())),
            params: self.params.clone(),
        }
    }

    /// Re-target the expression at a wider parameter list, mapping variable
    /// `i` to `var_map[i]`.
    pub fn embed(&self, new_params: &[&str], var_map: &[usize]) -> Expression {
        fn walk(node: &Node, var_map: &[usize]) -> Node {
            match node {
                Node::Const(v) => Node::Const(*v),
                Node::Var(i) => Node::Var(var_map[*i]),
                Node::Add(a, b) => Node::Add(
                    Box::new(walk(a, var_map)),
                    Box::new(walk(b, var_map)),
                ),
                Node::Sub(a, b) => Node::Sub(
                    Box::new(walk(a, var_map)),
                    Box::new(walk(b, var_map)),
                ),
                Node::Mul(a, b) => Node::Mul(
                    Box::new(walk(a, var_map)),
                    Box::new(walk(b, var_map)),
                ),
                Node::Div(a, b) => Node::Div(
                    Box::new(walk(a, var_map)),
                    Box::new(walk(b, var_map)),
                ),
                Node::Neg(a) => Node::Neg(Box::new(walk(a, var_map))),
                Node::Pow(a, k) => Node::Pow(Box::new(walk(a, var_map)), *k),
                Node::Func(f, a) => Node::Func(*f, Box::new(walk(a, var_map))),
            }
        }
        assert_eq!(var_map.len(), self.params.len());
        Expression {
            root: walk(&self.root, var_map),
            params: new_params.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Pretty-print. Parsing the output against the same parameter list
    /// reproduces the tree exactly.
    pub fn pretty(&self) -> String {
        fn prec(node: &Node) -> u8 {
            match node {
                Node::Add(..) | Node::Sub(..) => 1,
                Node::Mul(..) | Node::Div(..) => 2,
                Node::Neg(..) => 3,
                Node::Pow(..) => 4,
                Node::Const(_) | Node::Var(_) | Node::Func(..) => 5,
            }
        }
        fn wrap(inner: &Node, text: String, min: u8) -> String {
            if prec(inner) < min {
                format!("({text})")
            } else {
                text
            }
        }
        fn fmt(node: &Node, params: &[String]) -> String {
            match node {
                Node::Const(v) => {
                    // Parsed trees only ever hold nonnegative literals
                    // (a leading minus parses as `Neg`), so round-tripping
                    // is exact; programmatic negatives are parenthesized.
                    if *v < 0.0 {
                        format!("(-{})", fmt_f64(-v))
                    } else {
                        fmt_f64(*v)
                    }
                }
                Node::Var(i) => params[*i].clone(),
                Node::Add(a, b) => format!(
                    "{} + {}",
                    wrap(a, fmt(a, params), 1),
                    wrap(b, fmt(b, params), 2)
                ),
                Node::Sub(a, b) => format!(
                    "{} - {}",
                    wrap(a, fmt(a, params), 1),
                    wrap(b, fmt(b, params), 2)
                ),
                Node::Mul(a, b) => format!(
                    "{}*{}",
                    wrap(a, fmt(a, params), 2),
                    wrap(b, fmt(b, params), 3)
                ),
                Node::Div(a, b) => format!(
                    "{}/{}",
                    wrap(a, fmt(a, params), 2),
                    wrap(b, fmt(b, params), 3)
                ),
                Node::Neg(a) => format!("-{}", wrap(a, fmt(a, params), 3)),
                Node::Pow(a, k) => format!("{}^{}", wrap(a, fmt(a, params), 5), k),
                Node::Func(f, a) => format!("{}({})", f.name(), fmt(a, params)),
            }
        }
        fn fmt_f64(v: f64) -> String {
            let s = format!("{v}");
            // `{}` prints integral floats without a dot; both forms reparse
            // to the same constant.
            s
        }
        fmt(&self.root, &self.params)
    }

    /// Evaluate the value only.
    pub fn eval_value(&self, x: &DVec) -> Result<f64> {
        self.check_point(x)?;
        eval_value_node(&self.root, x, &self.params)
    }

    /// Evaluate value, gradient, and Hessian.
    pub fn eval_jet2(&self, x: &DVec) -> Result<Jet2> {
        self.check_point(x)?;
        eval_jet_node(&self.root, x, &self.params)
    }

    fn check_point(&self, x: &DVec) -> Result<()> {
        if x.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: x.len(),
                context: "evaluation point".into(),
            });
        }
        Ok(())
    }
}

fn display_node(node: &Node, params: &[String]) -> String {
    Expression {
        root: node.clone(),
        params: params.to_vec(),
    }
    .pretty()
}

fn domain_error(node: &Node, params: &[String], reason: &str) -> Error {
    Error::Domain {
        expr: display_node(node, params),
        reason: reason.into(),
    }
}

fn eval_value_node(node: &Node, x: &DVec, params: &[String]) -> Result<f64> {
    Ok(match node {
        Node::Const(v) => *v,
        Node::Var(i) => x[*i],
        Node::Add(a, b) => eval_value_node(a, x, params)? + eval_value_node(b, x, params)?,
        Node::Sub(a, b) => eval_value_node(a, x, params)? - eval_value_node(b, x, params)?,
        Node::Mul(a, b) => eval_value_node(a, x, params)? * eval_value_node(b, x, params)?,
        Node::Div(a, b) => {
            let denom = eval_value_node(b, x, params)?;
            if denom == 0.0 {
                return Err(domain_error(node, params, "division by zero"));
            }
            eval_value_node(a, x, params)? / denom
        }
        Node::Neg(a) => -eval_value_node(a, x, params)?,
        Node::Pow(a, k) => {
            let base = eval_value_node(a, x, params)?;
            if base == 0.0 && *k < 0 {
                return Err(domain_error(node, params, "zero base with negative exponent"));
            }
            base.powi(*k)
        }
        Node::Func(f, a) => {
            let u = eval_value_node(a, x, params)?;
            match f {
                Func::Sin => u.sin(),
                Func::Cos => u.cos(),
                Func::Tan => u.tan(),
                Func::Exp => u.exp(),
                Func::Atan => u.atan(),
                Func::Log => {
                    if u <= 0.0 {
                        return Err(domain_error(node, params, "log of non-positive value"));
                    }
                    u.ln()
                }
                Func::Sqrt => {
                    if u <= 0.0 {
                        return Err(domain_error(
                            node,
                            params,
                            "sqrt of non-positive value (derivative undefined)",
                        ));
                    }
                    u.sqrt()
                }
            }
        }
    })
}

fn eval_jet_node(node: &Node, x: &DVec, params: &[String]) -> Result<Jet2> {
    let dim = x.len();
    Ok(match node {
        Node::Const(v) => Jet2::constant(*v, dim),
        Node::Var(i) => Jet2::variable(x[*i], *i, dim),
        Node::Add(a, b) => eval_jet_node(a, x, params)?.add(&eval_jet_node(b, x, params)?),
        Node::Sub(a, b) => eval_jet_node(a, x, params)?.sub(&eval_jet_node(b, x, params)?),
        Node::Mul(a, b) => eval_jet_node(a, x, params)?.mul(&eval_jet_node(b, x, params)?),
        Node::Div(a, b) => {
            let denom = eval_jet_node(b, x, params)?;
            if denom.value == 0.0 {
                return Err(domain_error(node, params, "division by zero"));
            }
            eval_jet_node(a, x, params)?.mul(&denom.recip())
        }
        Node::Neg(a) => eval_jet_node(a, x, params)?.neg(),
        Node::Pow(a, k) => {
            let base = eval_jet_node(a, x, params)?;
            if base.value == 0.0 && *k < 0 {
                return Err(domain_error(node, params, "zero base with negative exponent"));
            }
            base.powi(*k)
        }
        Node::Func(f, a) => {
            let u = eval_jet_node(a, x, params)?;
            let v = u.value;
            match f {
                Func::Sin => u.chain(v.sin(), v.cos(), -v.sin()),
                Func::Cos => u.chain(v.cos(), -v.sin(), -v.cos()),
                Func::Tan => {
                    let t = v.tan();
                    let sec2 = 1.0 + t * t;
                    u.chain(t, sec2, 2.0 * t * sec2)
                }
                Func::Exp => {
                    let e = v.exp();
                    u.chain(e, e, e)
                }
                Func::Atan => {
                    let d = 1.0 + v * v;
                    u.chain(v.atan(), 1.0 / d, -2.0 * v / (d * d))
                }
                Func::Log => {
                    if v <= 0.0 {
                        return Err(domain_error(node, params, "log of non-positive value"));
                    }
                    u.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
                }
                Func::Sqrt => {
                    if v <= 0.0 {
                        return Err(domain_error(
                            node,
                            params,
                            "sqrt of non-positive value (derivative undefined)",
                        ));
                    }
                    let s = v.sqrt();
                    u.chain(s, 0.5 / s, -0.25 / (s * v))
                }
            }
        }
    })
}

/// Result of evaluating a stack of component expressions at one point.
#[derive(Debug, Clone)]
pub struct VectorJet {
    /// Component values: the ambient point.
    pub value: DVec,
    /// `ambient_dim x n` matrix of first derivatives.
    pub jacobian: DMat,
    /// One symmetric `n x n` Hessian per component.
    pub hessians: Vec<DMat>,
}

/// Evaluate a vector-valued map given componentwise; all components must
/// share one parameter list.
pub fn eval_vector_map(components: &[Expression], x: &DVec) -> Result<VectorJet> {
    let n = x.len();
    let rows = components.len();
    let mut value = DVec::zeros(rows);
    let mut jacobian = DMat::zeros(rows, n);
    let mut hessians = Vec::with_capacity(rows);
    for (row, comp) in components.iter().enumerate() {
        let jet = comp.eval_jet2(x)?;
        value[row] = jet.value;
        for col in 0..n {
            jacobian[(row, col)] = jet.gradient[col];
        }
        hessians.push(jet.hessian);
    }
    Ok(VectorJet {
        value,
        jacobian,
        hessians,
    })
}

/// Draw a random expression from a small generator grammar. Produced trees
/// stay within the domain of every function for points in `[-1, 1]^n`, which
/// makes them safe targets for finite-difference comparisons.
pub fn random_expression<R: rand::Rng>(rng: &mut R, params: &[&str], depth: usize) -> Expression {
    let root = random_node(rng, params.len(), depth);
    Expression {
        root,
        params: params.iter().map(|s| s.to_string()).collect(),
    }
}

fn random_node<R: rand::Rng>(rng: &mut R, nvars: usize, depth: usize) -> Node {
    if depth == 0 {
        return if rng.random_bool(0.6) && nvars > 0 {
            Node::Var(rng.random_range(0..nvars))
        } else {
            let c = Node::Const(rng.random_range(0.0..2.0));
            if rng.random_bool(0.5) {
                Node::Neg(Box::new(c))
            } else {
                c
            }
        };
    }
    match rng.random_range(0..9u32) {
        0 => Node::Add(
            Box::new(random_node(rng, nvars, depth - 1)),
            Box::new(random_node(rng, nvars, depth - 1)),
        ),
        1 => Node::Sub(
            Box::new(random_node(rng, nvars, depth - 1)),
            Box::new(random_node(rng, nvars, depth - 1)),
        ),
        2 => Node::Mul(
            Box::new(random_node(rng, nvars, depth - 1)),
            Box::new(random_node(rng, nvars, depth - 1)),
        ),
        3 => Node::Neg(Box::new(random_node(rng, nvars, depth - 1))),
        4 => Node::Pow(Box::new(random_node(rng, nvars, depth - 1)), rng.random_range(2..4)),
        5 => Node::Func(Func::Sin, Box::new(random_node(rng, nvars, depth - 1))),
        6 => Node::Func(Func::Cos, Box::new(random_node(rng, nvars, depth - 1))),
        7 => Node::Func(Func::Atan, Box::new(random_node(rng, nvars, depth - 1))),
        _ => {
            // keep exp arguments tame and log/sqrt arguments positive
            let inner = random_node(rng, nvars, depth - 1);
            if rng.random_bool(0.5) {
                Node::Func(
                    Func::Exp,
                    Box::new(Node::Mul(Box::new(Node::Const(0.5)), Box::new(inner))),
                )
            } else {
                let positive = Node::Add(
                    Box::new(Node::Const(1.5)),
                    Box::new(Node::Func(Func::Sin, Box::new(inner))),
                );
                if rng.random_bool(0.5) {
                    Node::Func(Func::Log, Box::new(positive))
                } else {
                    Node::Func(Func::Sqrt, Box::new(positive))
                }
            }
        }
    }
}
