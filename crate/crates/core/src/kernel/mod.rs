//! Kernel frontend: restricted C loop nests to [`KernelIR`].
//!
//! The accepted dialect is a small subset of C99: `double` declarations of
//! fixed-size arrays and scalars followed by one perfectly nested `for` loop
//! stack whose innermost body is a list of assignments. Array extents may be
//! a literal, a constant, or a constant plus/minus an integer. Subscripts must
//! be a loop index with an optional integer offset, or a fixed integer.

mod ir;
mod lexer;
mod parser;

use std::collections::BTreeMap;

use thiserror::Error;

pub use ir::{
    AccessKind, AccessRef, ArrayDecl, AssignOp, BinOp, Expr, FlopCount, IndexTerm, KernelIR,
    LValue, LoopSpec, Number, Statement,
};

/// Element size of `double`, the only element type accepted in v1.
pub const DOUBLE_BYTES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("unsupported construct at {line}:{col}: {message}")]
    RestrictionViolation {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("constant `{name}` is not defined (pass it with -D {name} <value>)")]
    MissingConstant { name: String },
}

/// Raw kernel text plus the constant bindings supplied on the command line.
#[derive(Debug, Clone, Default)]
pub struct KernelSource {
    pub text: String,
    pub constants: BTreeMap<String, i64>,
}

impl KernelSource {
    pub fn new(text: impl Into<String>) -> Self {
        KernelSource {
            text: text.into(),
            constants: BTreeMap::new(),
        }
    }

    pub fn with_constant(mut self, name: &str, value: i64) -> Self {
        self.constants.insert(name.to_string(), value);
        self
    }
}

pub fn parse_kernel(src: &KernelSource) -> Result<KernelIR, KernelError> {
    let tokens = lexer::tokenize(&src.text)?;
    parser::Parser::new(tokens, &src.constants).parse()
}

/// Operator counts of the innermost statements, taken verbatim from the source.
pub fn count_flops(ir: &KernelIR) -> FlopCount {
    let mut flops = FlopCount::default();
    for stmt in &ir.statements {
        match stmt.op {
            AssignOp::Assign => {}
            AssignOp::Add | AssignOp::Sub => flops.add += 1,
            AssignOp::Mul => flops.mul += 1,
            AssignOp::Div => flops.div += 1,
        }
        stmt.value.visit(&mut |e| {
            if let Expr::Binary(op, _, _) = e {
                match op {
                    BinOp::Add | BinOp::Sub => flops.add += 1,
                    BinOp::Mul => flops.mul += 1,
                    BinOp::Div => flops.div += 1,
                }
            }
        });
    }
    flops.total = flops.add + flops.mul + flops.div;
    flops
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const JACOBI_2D: &str = "
double a[M][N];
double b[M][N];
double s;

for(int j=1; j<M-1; ++j)
  for(int i=1; i<N-1; ++i)
    b[j][i] = (a[j][i-1] + a[j][i+1]
              +a[j-1][i] + a[j+1][i]) * s;
";

    fn jacobi(n: i64, m: i64) -> KernelIR {
        parse_kernel(
            &KernelSource::new(JACOBI_2D)
                .with_constant("N", n)
                .with_constant("M", m),
        )
        .unwrap()
    }

    fn rel(index: &str, offset: i64) -> IndexTerm {
        IndexTerm::Relative {
            index: index.into(),
            offset,
        }
    }

    #[test]
    fn jacobi_loop_stack() {
        let ir = jacobi(5000, 500);
        let loops: Vec<_> = ir
            .loops
            .iter()
            .map(|l| (l.index.as_str(), l.start, l.end_exclusive, l.step))
            .collect();
        assert_eq!(loops, vec![("j", 1, 499, 1), ("i", 1, 4999, 1)]);
    }

    #[test]
    fn jacobi_sources_and_destinations() {
        let ir = jacobi(5000, 500);
        let sources: Vec<_> = ir
            .accesses
            .iter()
            .filter(|a| a.kind == AccessKind::Source)
            .map(|a| (a.array.clone(), a.indices.clone()))
            .collect();
        assert_eq!(sources, vec![
            ("a".to_string(), vec![rel("j", 0), rel("i", -1)]),
            ("a".to_string(), vec![rel("j", 0), rel("i", 1)]),
            ("a".to_string(), vec![rel("j", -1), rel("i", 0)]),
            ("a".to_string(), vec![rel("j", 1), rel("i", 0)]),
        ]);
        let dests: Vec<_> = ir
            .accesses
            .iter()
            .filter(|a| a.kind == AccessKind::Destination)
            .map(|a| (a.array.clone(), a.indices.clone()))
            .collect();
        assert_eq!(dests, vec![("b".to_string(), vec![rel("j", 0), rel("i", 0)])]);
        assert_eq!(ir.scalars, vec!["s".to_string()]);
    }

    #[test]
    fn jacobi_flops() {
        let f = jacobi(100, 100).flops_per_iteration;
        assert_eq!((f.add, f.mul, f.div, f.total), (3, 1, 0, 4));
    }

    #[test]
    fn triad_flops() {
        let ir = parse_kernel(
            &KernelSource::new("double a[N], b[N], c[N], d[N];\nfor(i=0;i<N;++i) a[i]=b[i]+c[i]*d[i];")
                .with_constant("N", 1000),
        )
        .unwrap();
        let f = ir.flops_per_iteration;
        assert_eq!((f.add, f.mul, f.div, f.total), (1, 1, 0, 2));
    }

    #[test]
    fn kahan_flops_and_scalars() {
        let src = "double a[N], b[N], c;
double sum, prod, t, y;
for(int i=0; i<N; ++i) {
    prod = a[i] * b[i]; y = prod - c;
    t = sum + y; c = (t - sum) - y; sum = t;
}";
        let ir = parse_kernel(&KernelSource::new(src).with_constant("N", 64)).unwrap();
        let f = ir.flops_per_iteration;
        assert_eq!((f.add, f.mul, f.div, f.total), (4, 1, 0, 5));
        assert_eq!(ir.statements.len(), 5);
        assert_eq!(ir.accesses.len(), 2);
        assert!(ir.accesses.iter().all(|a| a.kind == AccessKind::Source));
    }

    #[test]
    fn read_modify_write_has_source_and_destination() {
        let src = "double u[N]; double x[N];\nfor(int i=0;i<N;i++) u[i] = u[i] + x[i];";
        let ir = parse_kernel(&KernelSource::new(src).with_constant("N", 16)).unwrap();
        let u: Vec<_> = ir.accesses.iter().filter(|a| a.array == "u").collect();
        assert_eq!(u.len(), 2);
        assert_eq!(u[0].kind, AccessKind::Source);
        assert_eq!(u[1].kind, AccessKind::Destination);
        assert_eq!(u[0].indices, u[1].indices);
    }

    #[test]
    fn extents_with_offsets() {
        let src = "double u[N][M+3][N-2][5];\nfor(int i=0;i<4;++i) u[0][1][2][i] = 1.0;";
        let ir = parse_kernel(
            &KernelSource::new(src)
                .with_constant("N", 10)
                .with_constant("M", 7),
        )
        .unwrap();
        assert_eq!(ir.arrays[0].dims, vec![10, 10, 8, 5]);
        assert_eq!(ir.accesses[0].indices[..3], [
            IndexTerm::Direct(0),
            IndexTerm::Direct(1),
            IndexTerm::Direct(2)
        ]);
    }

    #[test]
    fn restriction_product_extent() {
        let src = "double u[M*N];\nfor(int i=0;i<4;++i) u[i] = 1.0;";
        let err = parse_kernel(
            &KernelSource::new(src)
                .with_constant("N", 10)
                .with_constant("M", 7),
        )
        .unwrap_err();
        assert!(matches!(err, KernelError::RestrictionViolation { .. }), "{err}");
    }

    #[test]
    fn restriction_bad_subscripts() {
        for sub in ["2*i", "i*2", "i+j", "i-j", "b[i]"] {
            let src = format!(
                "double a[N][N]; double b[N];\nfor(int j=0;j<N;++j) for(int i=0;i<N;++i) a[j][{sub}] = 1.0;"
            );
            let err = parse_kernel(&KernelSource::new(src).with_constant("N", 8)).unwrap_err();
            assert!(matches!(err, KernelError::RestrictionViolation { .. }), "{sub}: {err}");
        }
    }

    #[test]
    fn restriction_loop_forms() {
        let bodies = [
            "for(int i=0;i<=N;++i) a[i]=1.0;",
            "for(int i=N;i>0;--i) a[i]=1.0;",
            "for(int i=0;i<N;i-=1) a[i]=1.0;",
            "for(int i=0;i<N;++i) { a[i]=1.0; for(int j=0;j<N;++j) a[j]=2.0; }",
            "for(int i=0;i<N;++i) a[i]=sqrt(a[i]);",
            "for(int i=5;i<5;++i) a[i]=1.0;",
        ];
        for body in bodies {
            let src = format!("double a[N];\n{body}");
            let err = parse_kernel(&KernelSource::new(src).with_constant("N", 8)).unwrap_err();
            assert!(matches!(err, KernelError::RestrictionViolation { .. }), "{body}: {err}");
        }
    }

    #[test]
    fn float_is_rejected() {
        let err = parse_kernel(
            &KernelSource::new("float a[N];\nfor(int i=0;i<N;++i) a[i]=1.0;").with_constant("N", 8),
        )
        .unwrap_err();
        assert!(matches!(err, KernelError::RestrictionViolation { .. }));
    }

    #[test]
    fn missing_constant() {
        let err = parse_kernel(&KernelSource::new(JACOBI_2D).with_constant("N", 8)).unwrap_err();
        assert_eq!(err, KernelError::MissingConstant { name: "M".into() });
    }

    #[test]
    fn syntax_errors() {
        for src in [
            "double a[N]\nfor(int i=0;i<N;++i) a[i]=1.0;",
            "double a[N];\nfor(int i=0;i<N;++i) a[i]=(1.0;",
            "double a[N];\nfor(int i=0;i<N;++i) a[i]=1.0; }",
            "double a[N];",
        ] {
            let err = parse_kernel(&KernelSource::new(src).with_constant("N", 8)).unwrap_err();
            assert!(matches!(err, KernelError::Syntax { .. }), "{src}: {err}");
        }
    }

    #[test]
    fn serialization_is_deterministic() {
        let a = serde_json::to_string(&jacobi(64, 32)).unwrap();
        let b = serde_json::to_string(&jacobi(64, 32)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pretty_print_round_trip() {
        let ir = jacobi(40, 20);
        let text = ir.to_source();
        let again = parse_kernel(&KernelSource::new(text.clone())).unwrap();
        assert_eq!(again, ir, "{text}");
    }
}
