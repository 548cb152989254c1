//! Compare backpropagation-through-time gradients with central finite
//! differences on a small random network.

use cia_lab::gru::{bce_with_logit, forward, loss_and_gradients, GruParams, Tensor};

fn loss(params: &GruParams, batch: &[(Vec<f64>, f64)]) -> f64 {
    batch
        .iter()
        .map(|(x, y)| bce_with_logit(forward(params, x).unwrap().1.logit, *y))
        .sum::<f64>()
        / batch.len() as f64
}

fn main() -> cia_lab::Result<()> {
    let (hidden, window, eps) = (4, 8, 1e-5);
    let mut params = GruParams::init(hidden, 42);
    let batch: Vec<(Vec<f64>, f64)> = (0..4)
        .map(|k| {
            let x = (0..window).map(|t| ((t * 7 + k * 3) % 11) as f64 / 10.0).collect();
            (x, (k % 2) as f64)
        })
        .collect();
    let refs: Vec<(&[f64], f64)> = batch.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
    let (value, grads) = loss_and_gradients(&params, &refs)?;
    println!("H={hidden} W={window} loss {value:.6}");

    for t in Tensor::ALL {
        let mut worst: f64 = 0.0;
        for k in 0..params.tensor(t).len() {
            let orig = params.tensor(t)[k];
            params.tensor_mut(t)[k] = orig + eps;
            let up = loss(&params, &batch);
            params.tensor_mut(t)[k] = orig - eps;
            let down = loss(&params, &batch);
            params.tensor_mut(t)[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.tensor(t)[k];
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
        println!("{:>6}: max relative error {worst:.2e}", t.name());
    }
    Ok(())
}
