use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::RegFile;
use crate::ir::{BinOp, Expr, Value};

fn flag(b: bool) -> BigUint {
    if b {
        BigUint::one()
    } else {
        BigUint::zero()
    }
}

/// Standard interpretation of an operator on naturals. Subtraction truncates at 0;
/// comparisons and connectives produce exactly 0 or 1.
pub fn nat_binop(op: BinOp, a: &BigUint, b: &BigUint) -> BigUint {
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => {
            if a >= b {
                a - b
            } else {
                BigUint::zero()
            }
        }
        BinOp::Mul => a * b,
        BinOp::Eq => flag(a == b),
        BinOp::Le => flag(a <= b),
        BinOp::And => flag(!a.is_zero() && !b.is_zero()),
        BinOp::Implies => flag(a.is_zero() || !b.is_zero()),
    }
}

pub fn apply_binop(op: BinOp, lhs: &Value, rhs: &Value) -> Value {
    match (lhs, rhs) {
        (Value::Fp(a), Value::Fp(b)) if op == BinOp::Eq => Value::Nat(flag(a == b)),
        (Value::Nat(a), Value::Nat(b)) => Value::Nat(nat_binop(op, a, b)),
        _ => Value::Uv,
    }
}

/// Evaluates an expression. Total: ill-typed operations yield `UV`.
pub fn eval_expr(e: &Expr, regs: &RegFile) -> Value {
    match e {
        Expr::Const(n) => Value::Nat(n.clone()),
        Expr::FpConst(l) => Value::Fp(*l),
        Expr::Reg(r) => regs.get(r),
        Expr::Bin(op, a, b) => apply_binop(*op, &eval_expr(a, regs), &eval_expr(b, regs)),
        Expr::Cond(c, t, f) => match eval_expr(c, regs) {
            Value::Nat(n) if !n.is_zero() => eval_expr(t, regs),
            Value::Nat(_) => eval_expr(f, regs),
            // a non-numeric condition has no defined selection
            _ => Value::Uv,
        },
    }
}

/// Evaluation over plain naturals, used by the linearized machine. Registers
/// missing from `lookup` read as 0. Returns `None` on a function-pointer literal,
/// which linearized code never contains.
pub fn eval_nat(e: &Expr, lookup: &impl Fn(&crate::ir::Reg) -> BigUint) -> Option<BigUint> {
    Some(match e {
        Expr::Const(n) => n.clone(),
        Expr::FpConst(_) => return None,
        Expr::Reg(r) => lookup(r),
        Expr::Bin(op, a, b) => nat_binop(*op, &eval_nat(a, lookup)?, &eval_nat(b, lookup)?),
        Expr::Cond(c, t, f) => {
            if eval_nat(c, lookup)?.is_zero() {
                eval_nat(f, lookup)?
            } else {
                eval_nat(t, lookup)?
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Reg;

    fn ev(e: &Expr) -> Value {
        eval_expr(e, &RegFile::default())
    }

    #[test]
    fn arithmetic_on_naturals() {
        assert_eq!(ev(&Expr::bin(BinOp::Add, Expr::nat(2), Expr::nat(3))), Value::nat(5));
        assert_eq!(ev(&Expr::bin(BinOp::Sub, Expr::nat(2), Expr::nat(3))), Value::nat(0));
        assert_eq!(ev(&Expr::bin(BinOp::Mul, Expr::nat(4), Expr::nat(3))), Value::nat(12));
        assert_eq!(ev(&Expr::bin(BinOp::Le, Expr::nat(3), Expr::nat(3))), Value::nat(1));
        assert_eq!(ev(&Expr::bin(BinOp::And, Expr::nat(7), Expr::nat(0))), Value::nat(0));
        assert_eq!(ev(&Expr::bin(BinOp::Implies, Expr::nat(0), Expr::nat(0))), Value::nat(1));
        assert_eq!(ev(&Expr::bin(BinOp::Implies, Expr::nat(2), Expr::nat(0))), Value::nat(0));
    }

    #[test]
    fn pointer_equality_compares_labels() {
        let same = Expr::bin(BinOp::Eq, Expr::FpConst(1), Expr::FpConst(1));
        let diff = Expr::bin(BinOp::Eq, Expr::FpConst(1), Expr::FpConst(2));
        assert_eq!(ev(&same), Value::nat(1));
        assert_eq!(ev(&diff), Value::nat(0));
    }

    #[test]
    fn mixed_operands_are_undefined() {
        assert_eq!(ev(&Expr::bin(BinOp::Le, Expr::FpConst(1), Expr::nat(4))), Value::Uv);
        assert_eq!(ev(&Expr::bin(BinOp::Add, Expr::FpConst(1), Expr::FpConst(1))), Value::Uv);
        assert_eq!(ev(&Expr::bin(BinOp::Eq, Expr::reg("unset"), Expr::nat(0))), Value::Uv);
    }

    #[test]
    fn conditional_ignores_unused_undefined_arm() {
        let uv = Expr::bin(BinOp::Le, Expr::FpConst(0), Expr::nat(4));
        assert_eq!(ev(&Expr::cond(Expr::nat(0), uv.clone(), Expr::nat(7))), Value::nat(7));
        assert_eq!(ev(&Expr::cond(Expr::nat(1), uv.clone(), Expr::nat(7))), Value::Uv);
        assert_eq!(ev(&Expr::cond(uv, Expr::nat(1), Expr::nat(1))), Value::Uv);
        assert_eq!(ev(&Expr::cond(Expr::FpConst(0), Expr::nat(1), Expr::nat(1))), Value::Uv);
    }

    #[test]
    fn registers_default_to_undefined() {
        let mut regs = RegFile::default();
        assert_eq!(eval_expr(&Expr::reg("x"), &regs), Value::Uv);
        regs.set(Reg::new("x"), Value::Fp(3));
        assert_eq!(eval_expr(&Expr::reg("x"), &regs), Value::Fp(3));
    }

    #[test]
    fn nat_evaluation_reads_missing_registers_as_zero() {
        let e = Expr::bin(BinOp::Add, Expr::reg("a"), Expr::nat(2));
        assert_eq!(eval_nat(&e, &|_| BigUint::zero()), Some(BigUint::from(2u32)));
        assert_eq!(eval_nat(&Expr::FpConst(0), &|_| BigUint::zero()), None);
    }
}
