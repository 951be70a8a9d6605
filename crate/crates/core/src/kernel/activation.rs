use super::Tensor;

/// Pointwise nonlinearity applied after a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    None,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::None => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's *output* value.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::None => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    // split on sign so exp never overflows
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation_apply(x: &Tensor, kind: Activation) -> Tensor {
    let mut out = x.clone();
    if kind != Activation::None {
        out.data_mut().iter_mut().for_each(|v| *v = kind.eval(*v));
    }
    out
}

/// Gradient w.r.t. the pre-activation, given the forward *output* and the upstream gradient.
pub fn activation_backward(output: &Tensor, upstream: &Tensor, kind: Activation) -> Tensor {
    let mut grad = upstream.clone();
    if kind != Activation::None {
        for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
            *g *= kind.derivative_from_output(y);
        }
    }
    grad
}
