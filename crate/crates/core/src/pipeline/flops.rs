/// Forward-pass cost of generating `tokens` tokens with an `n_params` model:
/// 2N FLOPs per token.
pub fn meter_flops(n_params: f64, tokens: usize) -> f64 {
    2.0 * n_params * tokens as f64
}
