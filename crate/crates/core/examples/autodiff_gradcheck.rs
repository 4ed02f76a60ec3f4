//! Differentiate a small expression on the tape and compare the result with
//! central finite differences.

use lgg::autodiff::{finite_diff_check, Tape, Var};
use lgg::Tensor;

/// `sum(log(1 + exp(relu(x W))))` for a fixed `W`.
fn f(x: Var<'_>) -> lgg::Result<Var<'_>> {
    let tape = x.tape();
    let w = Tensor::from_rows(&[[0.2, -0.4], [0.7, 0.1], [-0.3, 0.9]])?;
    let h = x.matmul(tape.constant(w))?.relu()?;
    let one = tape.constant(Tensor::ones(&h.shape()));
    h.exp()?.add(one)?.log()?.sum()
}

fn main() -> lgg::Result<()> {
    let x = Tensor::from_rows(&[[0.5, -1.0, 2.0], [1.5, 0.25, -0.75]])?;

    let tape = Tape::new();
    let leaf = tape.leaf(x.clone());
    let y = f(leaf)?;
    let grad = tape.backward(y)?.wrt(leaf);
    println!("f(x) = {:.6}", y.item());
    for i in 0..grad.rows() {
        println!("df/dx[{i}] = {:?}", grad.row(i));
    }

    let err = finite_diff_check(f, &x, 1e-5)?;
    println!("max relative error against central differences: {err:.2e}");
    Ok(())
}
