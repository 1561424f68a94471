//! Guard and output expressions: tree form, evaluation, typing, text syntax
//! and a size-ordered enumerator.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := "if" expr "then" expr "else" expr | or
//! or      := and ("or" and)*
//! and     := cmp ("and" cmp)*
//! cmp     := sum (("<" | "<=" | "=" | ">" | ">=") sum)?
//! sum     := product (("+" | "-") product)*
//! product := unary ("*" unary)*
//! unary   := "not" unary | atom
//! atom    := INT | "true" | "false" | "'" IDENT "'" | IDENT | "(" expr ")"
//! ```
//!
//! `≤`, `≥`, `==`, `&&`, `||` and `!` are accepted as aliases. Symbols are
//! printed quoted; a bare identifier is a variable unless the parser was
//! given a variable set that does not contain it.

mod enumerate;
mod parse;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::value::{Symbol, Type, Value};

pub use enumerate::{enumerate, Enumerator};
pub use parse::{parse, parse_with_vars, SyntaxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Lt,
    Le,
    Eq,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub const ALL: [BinOp; 10] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Eq,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::And,
        BinOp::Or,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Eq => "=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Mul | BinOp::Eq | BinOp::And | BinOp::Or)
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Le | BinOp::Eq | BinOp::Gt | BinOp::Ge => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul => 5,
        }
    }

    fn is_comparison(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Eq | BinOp::Gt | BinOp::Ge)
    }

    /// Operand types accepted and result type produced, or `None` when the
    /// operator does not apply to operands of type `ty`.
    pub fn result_type(self, ty: Type) -> Option<Type> {
        match (self, ty) {
            (BinOp::Add | BinOp::Sub | BinOp::Mul, Type::Int) => Some(Type::Int),
            (BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge, Type::Int) => Some(Type::Bool),
            (BinOp::Eq, _) => Some(Type::Bool),
            (BinOp::And | BinOp::Or, Type::Bool) => Some(Type::Bool),
            _ => None,
        }
    }

    /// Applies the operator to two defined values.
    pub fn apply(self, a: &Value, b: &Value) -> Result<Value, EvalError> {
        if a.is_undefined() || b.is_undefined() {
            return Err(EvalError::UndefinedOperand { op: self.symbol() });
        }
        let mismatch = || EvalError::TypeMismatch {
            op: self.symbol(),
            left: a.clone(),
            right: b.clone(),
        };
        match self {
            BinOp::Add | BinOp::Sub | BinOp::Mul => {
                let (x, y) = match (a, b) {
                    (Value::Int(x), Value::Int(y)) => (*x, *y),
                    _ => return Err(mismatch()),
                };
                let r = match self {
                    BinOp::Add => x.checked_add(y),
                    BinOp::Sub => x.checked_sub(y),
                    _ => x.checked_mul(y),
                };
                r.map(Value::Int).ok_or(EvalError::Overflow)
            }
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                let (x, y) = match (a, b) {
                    (Value::Int(x), Value::Int(y)) => (*x, *y),
                    _ => return Err(mismatch()),
                };
                Ok(Value::Bool(match self {
                    BinOp::Lt => x < y,
                    BinOp::Le => x <= y,
                    BinOp::Gt => x > y,
                    _ => x >= y,
                }))
            }
            BinOp::Eq => {
                if a.ty() != b.ty() {
                    return Err(mismatch());
                }
                Ok(Value::Bool(a == b))
            }
            BinOp::And | BinOp::Or => match (a, b) {
                (Value::Bool(x), Value::Bool(y)) => Ok(Value::Bool(if self == BinOp::And {
                    *x && *y
                } else {
                    *x || *y
                })),
                _ => Err(mismatch()),
            },
        }
    }
}

/// An expression tree over parameters, registers and constants.
///
/// The derived ordering is structural (variant, then children) and is the
/// tie-breaker used by expression search.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Bool(bool),
    Int(i64),
    Sym(Symbol),
    Var(String),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Ite(Box<Expr>, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("type mismatch in `{op}`: {left} vs {right}")]
    TypeMismatch { op: &'static str, left: Value, right: Value },
    #[error("undefined operand in `{op}`")]
    UndefinedOperand { op: &'static str },
    #[error("integer overflow")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TypeError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("ill-typed expression `{0}`")]
    IllTyped(String),
}

/// A variable lookup used during evaluation.
pub trait Environment {
    fn lookup(&self, name: &str) -> Option<Value>;
}

impl Environment for std::collections::BTreeMap<String, Value> {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.get(name).cloned()
    }
}

impl Environment for std::collections::HashMap<String, Value> {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.get(name).cloned()
    }
}

impl Environment for [(&str, Value)] {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| v.clone())
    }
}

impl<const N: usize> Environment for [(&str, Value); N] {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.as_slice().lookup(name)
    }
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn int(i: i64) -> Expr {
        Expr::Int(i)
    }

    pub fn sym(name: &str) -> Expr {
        Expr::Sym(Symbol::new(name))
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: Expr) -> Expr {
        Expr::Not(Box::new(e))
    }

    pub fn ite(c: Expr, a: Expr, b: Expr) -> Expr {
        Expr::Ite(Box::new(c), Box::new(a), Box::new(b))
    }

    pub fn from_value(v: &Value) -> Option<Expr> {
        match v {
            Value::Undefined => None,
            Value::Bool(b) => Some(Expr::Bool(*b)),
            Value::Int(i) => Some(Expr::Int(*i)),
            Value::Symbol(s) => Some(Expr::Sym(s.clone())),
        }
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Expr::Bool(true))
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Expr::Bool(_) | Expr::Int(_) | Expr::Sym(_))
    }

    /// Node count.
    pub fn size(&self) -> usize {
        match self {
            Expr::Bool(_) | Expr::Int(_) | Expr::Sym(_) | Expr::Var(_) => 1,
            Expr::Bin(_, a, b) => 1 + a.size() + b.size(),
            Expr::Not(a) => 1 + a.size(),
            Expr::Ite(c, a, b) => 1 + c.size() + a.size() + b.size(),
        }
    }

    pub fn const_count(&self) -> usize {
        self.count_leaves(&|e| e.is_const())
    }

    pub fn count_leaves(&self, pred: &dyn Fn(&Expr) -> bool) -> usize {
        match self {
            Expr::Bin(_, a, b) => a.count_leaves(pred) + b.count_leaves(pred),
            Expr::Not(a) => a.count_leaves(pred),
            Expr::Ite(c, a, b) => c.count_leaves(pred) + a.count_leaves(pred) + b.count_leaves(pred),
            leaf => usize::from(pred(leaf)),
        }
    }

    /// Names of the variables the expression reads.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Not(a) => a.collect_vars(out),
            Expr::Ite(c, a, b) => {
                c.collect_vars(out);
                a.collect_vars(out);
                b.collect_vars(out);
            }
            _ => {}
        }
    }

    pub fn eval<E: Environment + ?Sized>(&self, env: &E) -> Result<Value, EvalError> {
        match self {
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::Int(i) => Ok(Value::Int(*i)),
            Expr::Sym(s) => Ok(Value::Symbol(s.clone())),
            Expr::Var(v) => env
                .lookup(v)
                .ok_or_else(|| EvalError::UnboundVariable(v.clone())),
            Expr::Bin(op, a, b) => {
                let a = a.eval(env)?;
                let b = b.eval(env)?;
                op.apply(&a, &b)
            }
            Expr::Not(a) => match a.eval(env)? {
                Value::Bool(b) => Ok(Value::Bool(!b)),
                Value::Undefined => Err(EvalError::UndefinedOperand { op: "not" }),
                other => Err(EvalError::TypeMismatch {
                    op: "not",
                    left: other,
                    right: Value::Undefined,
                }),
            },
            Expr::Ite(c, a, b) => match c.eval(env)? {
                Value::Bool(true) => a.eval(env),
                Value::Bool(false) => b.eval(env),
                Value::Undefined => Err(EvalError::UndefinedOperand { op: "if" }),
                other => Err(EvalError::TypeMismatch {
                    op: "if",
                    left: other,
                    right: Value::Undefined,
                }),
            },
        }
    }

    /// Evaluates a guard; anything but a boolean result is an error.
    pub fn eval_bool<E: Environment + ?Sized>(&self, env: &E) -> Result<bool, EvalError> {
        match self.eval(env)? {
            Value::Bool(b) => Ok(b),
            Value::Undefined => Err(EvalError::UndefinedOperand { op: "guard" }),
            other => Err(EvalError::TypeMismatch {
                op: "guard",
                left: other,
                right: Value::Bool(true),
            }),
        }
    }

    pub fn type_of(&self, var_type: &dyn Fn(&str) -> Option<Type>) -> Result<Type, TypeError> {
        let ill = || TypeError::IllTyped(self.to_string());
        match self {
            Expr::Bool(_) => Ok(Type::Bool),
            Expr::Int(_) => Ok(Type::Int),
            Expr::Sym(_) => Ok(Type::Symbol),
            Expr::Var(v) => var_type(v).ok_or_else(|| TypeError::UnboundVariable(v.clone())),
            Expr::Bin(op, a, b) => {
                let ta = a.type_of(var_type)?;
                let tb = b.type_of(var_type)?;
                if ta != tb {
                    return Err(ill());
                }
                op.result_type(ta).ok_or_else(ill)
            }
            Expr::Not(a) => match a.type_of(var_type)? {
                Type::Bool => Ok(Type::Bool),
                _ => Err(ill()),
            },
            Expr::Ite(c, a, b) => {
                if c.type_of(var_type)? != Type::Bool {
                    return Err(ill());
                }
                let ta = a.type_of(var_type)?;
                if ta != b.type_of(var_type)? {
                    return Err(ill());
                }
                Ok(ta)
            }
        }
    }

    /// Canonical form: constant subtrees folded, commutative operands sorted
    /// by [`canonical_cmp`].
    pub fn canonical(&self) -> Expr {
        let folded = match self {
            Expr::Bin(op, a, b) => {
                let (mut a, mut b) = (a.canonical(), b.canonical());
                if op.is_commutative() && canonical_cmp(&a, &b) == Ordering::Greater {
                    std::mem::swap(&mut a, &mut b);
                }
                Expr::bin(*op, a, b)
            }
            Expr::Not(a) => Expr::not(a.canonical()),
            Expr::Ite(c, a, b) => Expr::ite(c.canonical(), a.canonical(), b.canonical()),
            leaf => leaf.clone(),
        };
        if !folded.is_const() && folded.vars().is_empty() {
            let empty: [(&str, Value); 0] = [];
            if let Ok(v) = folded.eval(&empty) {
                if let Some(e) = Expr::from_value(&v) {
                    return e;
                }
            }
        }
        folded
    }
}

/// Canonical order: node count, then printed text.
pub fn canonical_cmp(a: &Expr, b: &Expr) -> Ordering {
    a.size()
        .cmp(&b.size())
        .then_with(|| a.to_string().cmp(&b.to_string()))
}

const IF_PREC: u8 = 0;
const NOT_PREC: u8 = 6;
const ATOM_PREC: u8 = 7;

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, _, _) => op.precedence(),
            Expr::Not(_) => NOT_PREC,
            Expr::Ite(..) => IF_PREC,
            Expr::Int(i) if *i < 0 => NOT_PREC,
            _ => ATOM_PREC,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Int(i) => write!(f, "{i}"),
            Expr::Sym(s) => write!(f, "'{s}'"),
            Expr::Var(v) => f.write_str(v),
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                let left_parens = if op.is_comparison() {
                    a.precedence() <= p
                } else {
                    a.precedence() < p
                };
                a.write_child(f, left_parens)?;
                match op {
                    BinOp::Mul => f.write_str("*")?,
                    _ => write!(f, " {} ", op.symbol())?,
                }
                b.write_child(f, b.precedence() <= p)
            }
            Expr::Not(a) => {
                f.write_str("not ")?;
                a.write_child(f, a.precedence() < NOT_PREC)
            }
            Expr::Ite(c, a, b) => write!(f, "if {c} then {a} else {b}"),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}
