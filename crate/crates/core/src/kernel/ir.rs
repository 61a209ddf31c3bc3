use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

/// One `for` loop of the nest. `end_exclusive` is the evaluated `<` bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopSpec {
    pub index: String,
    pub start: i64,
    pub end_exclusive: i64,
    pub step: i64,
}

impl LoopSpec {
    pub fn trip_count(&self) -> i64 {
        (self.end_exclusive - self.start + self.step - 1) / self.step
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayDecl {
    pub name: String,
    pub element_size: usize,
    /// Extents after constant substitution, outermost first.
    pub dims: Vec<i64>,
}

impl ArrayDecl {
    /// Row-major element strides, outermost first.
    pub fn strides(&self) -> Vec<i64> {
        let mut strides = vec![1i64; self.dims.len()];
        for d in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * self.dims[d + 1];
        }
        strides
    }

    pub fn len(&self) -> i64 {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexTerm {
    Direct(i64),
    Relative { index: String, offset: i64 },
}

impl fmt::Display for IndexTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexTerm::Direct(v) => write!(f, "{v}"),
            IndexTerm::Relative { index, offset } => match offset.cmp(&0) {
                std::cmp::Ordering::Equal => write!(f, "{index}"),
                std::cmp::Ordering::Greater => write!(f, "{index}+{offset}"),
                std::cmp::Ordering::Less => write!(f, "{index}{offset}"),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    Source,
    Destination,
}

/// One textual array reference in the innermost statements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRef {
    pub array: String,
    pub indices: Vec<IndexTerm>,
    pub kind: AccessKind,
    /// Index of the statement the reference belongs to.
    pub statement: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCount {
    /// Additions and subtractions.
    pub add: u32,
    pub mul: u32,
    pub div: u32,
    pub total: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Number {
    Int(i64),
    Float(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Number(Number),
    Scalar(String),
    LoopIndex(String),
    Array { name: String, indices: Vec<IndexTerm> },
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Pre-order traversal.
    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Neg(inner) => inner.visit(f),
            Expr::Binary(_, l, r) => {
                l.visit(f);
                r.visit(f);
            }
            _ => {}
        }
    }

    fn write_c(&self, out: &mut String) {
        match self {
            Expr::Number(Number::Int(v)) => write!(out, "{v}").unwrap(),
            Expr::Number(Number::Float(v)) => write!(out, "{v:?}").unwrap(),
            Expr::Scalar(name) | Expr::LoopIndex(name) => out.push_str(name),
            Expr::Array { name, indices } => write_array(out, name, indices),
            Expr::Neg(inner) => {
                out.push_str("-(");
                inner.write_c(out);
                out.push(')');
            }
            Expr::Binary(op, l, r) => {
                out.push('(');
                l.write_c(out);
                write!(out, " {} ", op.symbol()).unwrap();
                r.write_c(out);
                out.push(')');
            }
        }
    }
}

fn write_array(out: &mut String, name: &str, indices: &[IndexTerm]) {
    out.push_str(name);
    for idx in indices {
        write!(out, "[{idx}]").unwrap();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LValue {
    Scalar(String),
    Array { name: String, indices: Vec<IndexTerm> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignOp {
    Assign,
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub target: LValue,
    pub op: AssignOp,
    pub value: Expr,
}

/// Validated loop nest with its access tables and flop counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelIR {
    /// Outermost first.
    pub loops: Vec<LoopSpec>,
    pub arrays: Vec<ArrayDecl>,
    pub scalars: Vec<String>,
    /// In execution order: per statement, right-hand side references left to
    /// right, then the written reference.
    pub accesses: Vec<AccessRef>,
    pub flops_per_iteration: FlopCount,
    pub statements: Vec<Statement>,
}

impl KernelIR {
    pub fn array(&self, name: &str) -> Option<&ArrayDecl> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn element_size(&self) -> usize {
        self.arrays
            .iter()
            .map(|a| a.element_size)
            .max()
            .unwrap_or(super::DOUBLE_BYTES)
    }

    pub fn total_iterations(&self) -> i64 {
        self.loops.iter().map(LoopSpec::trip_count).product()
    }

    /// Render the IR back into the accepted kernel dialect with all
    /// constants substituted.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for a in &self.arrays {
            write!(out, "double {}", a.name).unwrap();
            for d in &a.dims {
                write!(out, "[{d}]").unwrap();
            }
            out.push_str(";\n");
        }
        if !self.scalars.is_empty() {
            writeln!(out, "double {};", self.scalars.join(", ")).unwrap();
        }
        out.push('\n');
        for (depth, l) in self.loops.iter().enumerate() {
            let incr = if l.step == 1 {
                format!("++{}", l.index)
            } else {
                format!("{} += {}", l.index, l.step)
            };
            writeln!(
                out,
                "{}for(int {i}={}; {i}<{}; {incr}) {{",
                "  ".repeat(depth),
                l.start,
                l.end_exclusive,
                i = l.index
            )
            .unwrap();
        }
        let indent = "  ".repeat(self.loops.len());
        for s in &self.statements {
            out.push_str(&indent);
            match &s.target {
                LValue::Scalar(name) => out.push_str(name),
                LValue::Array { name, indices } => write_array(&mut out, name, indices),
            }
            out.push_str(match s.op {
                AssignOp::Assign => " = ",
                AssignOp::Add => " += ",
                AssignOp::Sub => " -= ",
                AssignOp::Mul => " *= ",
                AssignOp::Div => " /= ",
            });
            s.value.write_c(&mut out);
            out.push_str(";\n");
        }
        for depth in (0..self.loops.len()).rev() {
            writeln!(out, "{}}}", "  ".repeat(depth)).unwrap();
        }
        out
    }
}
