use crate::nets::EncoderPostNet;
use crate::tensor::{self, Result, Tensor, TensorError};

/// Target value excluded from cross-entropy.
pub const IGNORE: usize = usize::MAX;

/// Mean cross-entropy of the frame codes at the masked timesteps under the
/// post-net code distribution. Unmasked frames contribute neither value nor
/// gradient; with no masked frame the loss is 0.
pub fn mlm_loss(h: &Tensor, codes: &[usize], masked: &[usize], post: &EncoderPostNet) -> Result<Tensor> {
    let t = h.rows();
    if codes.len() != t {
        return Err(TensorError::Shape {
            op: "mlm_loss",
            lhs: h.shape().to_vec(),
            rhs: vec![codes.len()],
        });
    }
    let mut targets = vec![IGNORE; t];
    for &m in masked {
        if m >= t {
            return Err(TensorError::Index {
                op: "mlm_loss",
                position: m,
                value: m,
                limit: t,
            });
        }
        targets[m] = codes[m];
    }
    let log_probs = post.log_probs(h)?;
    tensor::cross_entropy(&log_probs, &targets, Some(IGNORE))
}

/// Teacher-forced token cross-entropy of decoder logits `[N+1, V]` against
/// `targets` (the code sequence followed by EOS).
pub fn reconstruction_loss(logits: &Tensor, targets: &[usize]) -> Result<Tensor> {
    if logits.rows() != targets.len() {
        return Err(TensorError::Shape {
            op: "reconstruction_loss",
            lhs: logits.shape().to_vec(),
            rhs: vec![targets.len()],
        });
    }
    tensor::cross_entropy(&tensor::log_softmax(logits), targets, None)
}
