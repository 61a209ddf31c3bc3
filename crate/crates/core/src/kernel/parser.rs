use std::collections::BTreeMap;

use super::ir::*;
use super::lexer::{Tok, Token};
use super::{count_flops, KernelError, DOUBLE_BYTES};

pub struct Parser<'c> {
    toks: Vec<Token>,
    pos: usize,
    constants: &'c BTreeMap<String, i64>,
    arrays: Vec<ArrayDecl>,
    scalars: Vec<String>,
    loops: Vec<LoopSpec>,
    accesses: Vec<AccessRef>,
    statements: Vec<Statement>,
}

enum Body {
    Loop,
    Statements,
}

impl<'c> Parser<'c> {
    pub fn new(toks: Vec<Token>, constants: &'c BTreeMap<String, i64>) -> Self {
        Parser {
            toks,
            pos: 0,
            constants,
            arrays: Vec::new(),
            scalars: Vec::new(),
            loops: Vec::new(),
            accesses: Vec::new(),
            statements: Vec::new(),
        }
    }

    pub fn parse(mut self) -> Result<KernelIR, KernelError> {
        while !self.at_ident("for") {
            if self.peek().is_none() {
                return Err(self.syntax("expected a `for` loop nest"));
            }
            self.declaration()?;
        }
        self.for_loop()?;
        if self.peek().is_some() {
            return Err(self.syntax("unexpected tokens after the loop nest"));
        }
        let mut ir = KernelIR {
            loops: self.loops,
            arrays: self.arrays,
            scalars: self.scalars,
            accesses: self.accesses,
            flops_per_iteration: FlopCount::default(),
            statements: self.statements,
        };
        ir.flops_per_iteration = count_flops(&ir);
        Ok(ir)
    }

    // ---- token helpers ----

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn location(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1))
    }

    fn syntax(&self, message: impl Into<String>) -> KernelError {
        let (line, col) = self.location();
        KernelError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }

    fn restriction(&self, message: impl Into<String>) -> KernelError {
        let (line, col) = self.location();
        KernelError::RestrictionViolation {
            line,
            col,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), KernelError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.syntax(format!("expected {what}")))
        }
    }

    fn at_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w == word)
    }

    fn ident(&mut self, what: &str) -> Result<String, KernelError> {
        match self.peek() {
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                self.pos += 1;
                Ok(name)
            }
            _ => Err(self.syntax(format!("expected {what}"))),
        }
    }

    fn constant(&self, name: &str) -> Result<i64, KernelError> {
        self.constants
            .get(name)
            .copied()
            .ok_or_else(|| KernelError::MissingConstant { name: name.into() })
    }

    fn is_declared(&self, name: &str) -> bool {
        self.arrays.iter().any(|a| a.name == name) || self.scalars.iter().any(|s| s == name)
    }

    // ---- declarations ----

    fn declaration(&mut self) -> Result<(), KernelError> {
        while self.at_ident("const") || self.at_ident("static") {
            self.pos += 1;
        }
        match self.peek() {
            Some(Tok::Ident(t)) if t == "double" => {
                self.pos += 1;
            }
            Some(Tok::Ident(t))
                if matches!(t.as_str(), "float" | "int" | "long" | "char" | "short" | "unsigned") =>
            {
                return Err(self.restriction(format!(
                    "only `double` declarations are supported, found `{t}`"
                )));
            }
            _ => return Err(self.syntax("expected a declaration or a `for` loop")),
        }
        loop {
            self.declarator()?;
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::Semi, "`;` after declaration")?;
            return Ok(());
        }
    }

    fn declarator(&mut self) -> Result<(), KernelError> {
        if self.peek() == Some(&Tok::Star) {
            return Err(self.restriction("pointer declarations are not supported"));
        }
        let name = self.ident("a variable name")?;
        if self.is_declared(&name) {
            return Err(self.restriction(format!("`{name}` is declared twice")));
        }
        if self.constants.contains_key(&name) {
            return Err(self.restriction(format!("`{name}` shadows a constant")));
        }
        let mut dims = Vec::new();
        while self.eat(&Tok::LBracket) {
            dims.push(self.extent()?);
            self.expect(Tok::RBracket, "`]`")?;
        }
        if self.eat(&Tok::Assign) {
            if !dims.is_empty() {
                return Err(self.restriction("array initializers are not supported"));
            }
            self.eat(&Tok::Minus);
            match self.next() {
                Some(Tok::Int(_)) | Some(Tok::Float(_)) => {}
                _ => return Err(self.syntax("expected a numeric initializer")),
            }
        }
        if dims.is_empty() {
            self.scalars.push(name);
        } else {
            self.arrays.push(ArrayDecl {
                name,
                element_size: DOUBLE_BYTES,
                dims,
            });
        }
        Ok(())
    }

    /// `CONST`, `CONST +/- int`, or an integer literal.
    fn extent(&mut self) -> Result<i64, KernelError> {
        let base = match self.next() {
            Some(Tok::Int(v)) => v,
            Some(Tok::Ident(name)) => self.constant(&name)?,
            Some(Tok::RBracket) => {
                self.pos -= 1;
                return Err(self.restriction("arrays need a fixed extent"));
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return Err(self.restriction("array extents must be a constant or an integer"));
            }
        };
        let value = match self.peek() {
            Some(Tok::Plus) | Some(Tok::Minus) => {
                let sign = if self.next() == Some(Tok::Plus) { 1 } else { -1 };
                match self.next() {
                    Some(Tok::Int(v)) => base + sign * v,
                    _ => {
                        self.pos -= 1;
                        return Err(
                            self.restriction("array extents may only add or subtract an integer")
                        );
                    }
                }
            }
            Some(Tok::RBracket) => base,
            _ => {
                return Err(self.restriction(
                    "array extents must be a constant, optionally plus or minus an integer",
                ))
            }
        };
        if self.peek() != Some(&Tok::RBracket) {
            return Err(self.restriction("array extents may only add or subtract one integer"));
        }
        if value <= 0 {
            return Err(self.restriction(format!("array extent evaluates to {value}")));
        }
        Ok(value)
    }

    // ---- loops ----

    fn for_loop(&mut self) -> Result<(), KernelError> {
        let _ = self.ident("`for`")?;
        self.expect(Tok::LParen, "`(` after `for`")?;
        if self.at_ident("int") || self.at_ident("long") || self.at_ident("unsigned") {
            self.pos += 1;
        }
        let index = self.ident("a loop index")?;
        if self.is_declared(&index) || self.constants.contains_key(&index) {
            return Err(self.restriction(format!("loop index `{index}` clashes with a declaration")));
        }
        if self.loops.iter().any(|l| l.index == index) {
            return Err(self.restriction(format!("loop index `{index}` is reused")));
        }
        self.expect(Tok::Assign, "`=` in loop initializer")?;
        let start = self.int_expr()?;
        self.expect(Tok::Semi, "`;` after loop initializer")?;

        let cond_var = self.ident("the loop index in the condition")?;
        if cond_var != index {
            return Err(self.restriction("the loop condition must test the loop index"));
        }
        match self.next() {
            Some(Tok::Lt) => {}
            Some(Tok::Le | Tok::Gt | Tok::Ge | Tok::NotEq | Tok::EqEq) => {
                self.pos -= 1;
                return Err(self.restriction("only `<` loop conditions are supported"));
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return Err(self.syntax("expected a comparison in the loop condition"));
            }
        }
        let end_exclusive = self.int_expr()?;
        self.expect(Tok::Semi, "`;` after loop condition")?;
        let step = self.increment(&index)?;
        self.expect(Tok::RParen, "`)` closing the loop header")?;
        if start >= end_exclusive {
            return Err(self.restriction(format!(
                "loop `{index}` runs from {start} to {end_exclusive} and has no iterations"
            )));
        }
        self.loops.push(LoopSpec {
            index,
            start,
            end_exclusive,
            step,
        });

        if self.eat(&Tok::LBrace) {
            match self.body()? {
                Body::Loop => {
                    if !self.eat(&Tok::RBrace) {
                        return Err(if self.peek().is_some() {
                            self.restriction("loops must be perfectly nested")
                        } else {
                            self.syntax("expected `}`")
                        });
                    }
                }
                Body::Statements => self.expect(Tok::RBrace, "`}`")?,
            }
        } else if self.at_ident("for") {
            self.for_loop()?;
        } else {
            self.statement()?;
        }
        Ok(())
    }

    fn body(&mut self) -> Result<Body, KernelError> {
        if self.at_ident("for") {
            self.for_loop()?;
            return Ok(Body::Loop);
        }
        let mut any = false;
        while self.peek().is_some() && self.peek() != Some(&Tok::RBrace) {
            if self.at_ident("for") {
                return Err(self.restriction("loops must be perfectly nested"));
            }
            self.statement()?;
            any = true;
        }
        if !any {
            return Err(self.syntax("empty loop body"));
        }
        Ok(Body::Statements)
    }

    fn increment(&mut self, index: &str) -> Result<i64, KernelError> {
        match self.next() {
            Some(Tok::PlusPlus) => {
                let v = self.ident("the loop index")?;
                if v != index {
                    return Err(self.restriction("the increment must update the loop index"));
                }
                Ok(1)
            }
            Some(Tok::MinusMinus) => {
                self.pos -= 1;
                Err(self.restriction("only incrementing loops are supported"))
            }
            Some(Tok::Ident(v)) => {
                if v != index {
                    return Err(self.restriction("the increment must update the loop index"));
                }
                match self.next() {
                    Some(Tok::PlusPlus) => Ok(1),
                    Some(Tok::PlusAssign) => {
                        let step = self.int_expr()?;
                        if step < 1 {
                            return Err(self.restriction("loop steps must be positive"));
                        }
                        Ok(step)
                    }
                    Some(Tok::MinusMinus | Tok::MinusAssign | Tok::Assign | Tok::StarAssign) => {
                        self.pos -= 1;
                        Err(self.restriction("only `++` and `+= c` increments are supported"))
                    }
                    _ => {
                        self.pos = self.pos.saturating_sub(1);
                        Err(self.syntax("expected a loop increment"))
                    }
                }
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.syntax("expected a loop increment"))
            }
        }
    }

    /// Integer arithmetic over literals and constants (loop bounds).
    fn int_expr(&mut self) -> Result<i64, KernelError> {
        let mut acc = self.int_term()?;
        loop {
            if self.eat(&Tok::Plus) {
                acc = acc
                    .checked_add(self.int_term()?)
                    .ok_or_else(|| self.restriction("loop bound overflows"))?;
            } else if self.eat(&Tok::Minus) {
                acc = acc
                    .checked_sub(self.int_term()?)
                    .ok_or_else(|| self.restriction("loop bound overflows"))?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn int_term(&mut self) -> Result<i64, KernelError> {
        let mut acc = self.int_atom()?;
        while self.eat(&Tok::Star) {
            acc = acc
                .checked_mul(self.int_atom()?)
                .ok_or_else(|| self.restriction("loop bound overflows"))?;
        }
        Ok(acc)
    }

    fn int_atom(&mut self) -> Result<i64, KernelError> {
        match self.next() {
            Some(Tok::Int(v)) => Ok(v),
            Some(Tok::Minus) => Ok(-self.int_atom()?),
            Some(Tok::LParen) => {
                let v = self.int_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(v)
            }
            Some(Tok::Ident(name)) => {
                if self.is_declared(&name) || self.loops.iter().any(|l| l.index == name) {
                    self.pos -= 1;
                    return Err(
                        self.restriction("loop bounds may only use integers and constants")
                    );
                }
                self.constant(&name)
            }
            Some(Tok::Float(_)) => {
                self.pos -= 1;
                Err(self.restriction("loop bounds must be integers"))
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.syntax("expected an integer expression"))
            }
        }
    }

    // ---- statements ----

    fn statement(&mut self) -> Result<(), KernelError> {
        if self.at_ident("if") || self.at_ident("while") || self.at_ident("return") {
            return Err(self.restriction("only assignments are allowed in the loop body"));
        }
        if self.peek() == Some(&Tok::LBrace) {
            return Err(self.restriction("nested blocks are not supported in the loop body"));
        }
        let stmt_index = self.statements.len();
        let name = self.ident("an assignment target")?;
        let target = if self.peek() == Some(&Tok::LBracket) {
            let indices = self.subscripts(&name)?;
            LValue::Array { name, indices }
        } else if self.scalars.contains(&name) {
            LValue::Scalar(name)
        } else if self.arrays.iter().any(|a| a.name == name) {
            return Err(self.restriction(format!("array `{name}` assigned without subscripts")));
        } else {
            self.pos -= 1;
            return Err(self.restriction(format!("assignment to undeclared or read-only `{name}`")));
        };
        let op = match self.next() {
            Some(Tok::Assign) => AssignOp::Assign,
            Some(Tok::PlusAssign) => AssignOp::Add,
            Some(Tok::MinusAssign) => AssignOp::Sub,
            Some(Tok::StarAssign) => AssignOp::Mul,
            Some(Tok::SlashAssign) => AssignOp::Div,
            Some(Tok::PlusPlus | Tok::MinusMinus) => {
                self.pos -= 1;
                return Err(self.restriction("increment statements are not supported"));
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return Err(self.syntax("expected an assignment operator"));
            }
        };
        let mut refs = Vec::new();
        let value = self.expr(&mut refs)?;
        self.expect(Tok::Semi, "`;` after statement")?;

        for (array, indices) in refs {
            self.accesses.push(AccessRef {
                array,
                indices,
                kind: AccessKind::Source,
                statement: stmt_index,
            });
        }
        if let LValue::Array { name, indices } = &target {
            if op != AssignOp::Assign {
                self.accesses.push(AccessRef {
                    array: name.clone(),
                    indices: indices.clone(),
                    kind: AccessKind::Source,
                    statement: stmt_index,
                });
            }
            self.accesses.push(AccessRef {
                array: name.clone(),
                indices: indices.clone(),
                kind: AccessKind::Destination,
                statement: stmt_index,
            });
        }
        self.statements.push(Statement { target, op, value });
        Ok(())
    }

    fn expr(&mut self, refs: &mut Vec<(String, Vec<IndexTerm>)>) -> Result<Expr, KernelError> {
        let mut lhs = self.term(refs)?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term(refs)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self, refs: &mut Vec<(String, Vec<IndexTerm>)>) -> Result<Expr, KernelError> {
        let mut lhs = self.unary(refs)?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary(refs)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self, refs: &mut Vec<(String, Vec<IndexTerm>)>) -> Result<Expr, KernelError> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Neg(Box::new(self.unary(refs)?)));
        }
        if self.eat(&Tok::Plus) {
            return self.unary(refs);
        }
        self.primary(refs)
    }

    fn primary(&mut self, refs: &mut Vec<(String, Vec<IndexTerm>)>) -> Result<Expr, KernelError> {
        match self.next() {
            Some(Tok::Int(v)) => Ok(Expr::Number(Number::Int(v))),
            Some(Tok::Float(v)) => Ok(Expr::Number(Number::Float(v))),
            Some(Tok::LParen) => {
                let e = self.expr(refs)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos -= 1;
                    return Err(self.restriction(format!("function call `{name}` is not supported")));
                }
                if self.peek() == Some(&Tok::LBracket) {
                    let indices = self.subscripts(&name)?;
                    refs.push((name.clone(), indices.clone()));
                    return Ok(Expr::Array { name, indices });
                }
                if self.scalars.contains(&name) {
                    return Ok(Expr::Scalar(name));
                }
                if self.loops.iter().any(|l| l.index == name) {
                    return Ok(Expr::LoopIndex(name));
                }
                if let Some(v) = self.constants.get(&name) {
                    return Ok(Expr::Number(Number::Int(*v)));
                }
                self.pos -= 1;
                if self.arrays.iter().any(|a| a.name == name) {
                    Err(self.restriction(format!("array `{name}` used without subscripts")))
                } else {
                    Err(self.restriction(format!("undeclared identifier `{name}`")))
                }
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.syntax("expected an operand"))
            }
        }
    }

    fn subscripts(&mut self, name: &str) -> Result<Vec<IndexTerm>, KernelError> {
        let rank = match self.arrays.iter().find(|a| a.name == name) {
            Some(a) => a.dims.len(),
            None => {
                self.pos -= 1;
                return Err(self.restriction(format!("`{name}` is not a declared array")));
            }
        };
        let mut indices = Vec::with_capacity(rank);
        while self.eat(&Tok::LBracket) {
            indices.push(self.index_term()?);
            self.expect(Tok::RBracket, "`]`")?;
        }
        if indices.len() != rank {
            return Err(self.restriction(format!(
                "`{name}` has {rank} dimensions but {} subscripts",
                indices.len()
            )));
        }
        Ok(indices)
    }

    fn index_int(&mut self) -> Result<Option<i64>, KernelError> {
        match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Some(v))
            }
            Some(Tok::Ident(name))
                if !self.is_declared(&name) && !self.loops.iter().any(|l| l.index == name) =>
            {
                self.pos += 1;
                Ok(Some(self.constant(&name)?))
            }
            _ => Ok(None),
        }
    }

    /// `idx`, `idx +/- c`, `c`, or `c +/- c` where `c` is a literal or constant.
    fn index_term(&mut self) -> Result<IndexTerm, KernelError> {
        let bad = |p: &Self| {
            p.restriction("subscripts must be a loop index plus/minus an integer, or an integer")
        };
        let loop_var = match self.peek() {
            Some(Tok::Ident(n)) if self.loops.iter().any(|l| &l.index == n) => Some(n.clone()),
            _ => None,
        };
        let term = if let Some(index) = loop_var {
            self.pos += 1;
            let offset = match self.peek() {
                Some(Tok::Plus) | Some(Tok::Minus) => {
                    let sign = if self.next() == Some(Tok::Plus) { 1 } else { -1 };
                    match self.index_int()? {
                        Some(v) => sign * v,
                        None => return Err(bad(self)),
                    }
                }
                _ => 0,
            };
            IndexTerm::Relative { index, offset }
        } else {
            let negative = self.eat(&Tok::Minus);
            let Some(mut v) = self.index_int()? else {
                return Err(bad(self));
            };
            if negative {
                v = -v;
            }
            while matches!(self.peek(), Some(Tok::Plus) | Some(Tok::Minus)) {
                let sign = if self.next() == Some(Tok::Plus) { 1 } else { -1 };
                match self.index_int()? {
                    Some(w) => v += sign * w,
                    None => return Err(bad(self)),
                }
            }
            IndexTerm::Direct(v)
        };
        if self.peek() != Some(&Tok::RBracket) {
            return Err(bad(self));
        }
        Ok(term)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_kernel, KernelSource};
    use super::*;

    #[test]
    fn postfix_increment_and_step() {
        let ir = parse_kernel(
            &KernelSource::new("double a[N];\nfor(i=0;i<N;i+=2) a[i]=1.0;").with_constant("N", 9),
        )
        .unwrap();
        assert_eq!(ir.loops[0].step, 2);
        assert_eq!(ir.loops[0].trip_count(), 5);
    }

    #[test]
    fn constant_subscripts() {
        let ir = parse_kernel(
            &KernelSource::new("double a[N][N];\nfor(int i=0;i<N;++i) a[N-1][i+K]=a[0][i-K];")
                .with_constant("N", 9)
                .with_constant("K", 2),
        )
        .unwrap();
        assert_eq!(ir.accesses[0].indices, vec![IndexTerm::Direct(0), IndexTerm::Relative {
            index: "i".into(),
            offset: -2
        }]);
        assert_eq!(ir.accesses[1].indices[0], IndexTerm::Direct(8));
    }

    #[test]
    fn compound_assignment_counts_operator() {
        let ir = parse_kernel(
            &KernelSource::new("double a[N], b[N], s;\nfor(int i=0;i<N;++i) s += a[i]*b[i];")
                .with_constant("N", 9),
        )
        .unwrap();
        assert_eq!(ir.flops_per_iteration.total, 2);
        assert_eq!(ir.accesses.len(), 2);
    }
}
