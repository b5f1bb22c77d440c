//! `784-300-100-10:relu` style architecture strings.
//!
//! Dimensions are separated by `-`. A `:act` suffix on a hidden dimension sets
//! that layer's activation; a suffix on the last dimension sets the default
//! for hidden layers without their own. The output layer is always identity.

use serene_core::Activation;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arch {
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("architecture {spec:?}: {reason} (token {index}: {token:?})")]
pub struct ArchError {
    pub spec: String,
    pub index: usize,
    pub token: String,
    pub reason: &'static str,
}

pub fn parse_arch(spec: &str) -> Result<Arch, ArchError> {
    let tokens: Vec<&str> = spec.split('-').collect();
    let fail = |index: usize, reason| ArchError {
        spec: spec.to_string(),
        index,
        token: tokens[index].to_string(),
        reason,
    };
    if tokens.len() < 2 {
        return Err(fail(0, "need an input and an output size"));
    }
    let mut dims = Vec::with_capacity(tokens.len());
    let mut own = Vec::with_capacity(tokens.len());
    for (i, tok) in tokens.iter().enumerate() {
        let (d, act) = match tok.split_once(':') {
            Some((d, a)) => (d, Some(a.parse::<Activation>().map_err(|_| fail(i, "unknown activation"))?)),
            None => (*tok, None),
        };
        if d.is_empty() {
            return Err(fail(i, "missing layer size"));
        }
        let d: usize = d.parse().map_err(|_| fail(i, "layer size is not a positive integer"))?;
        if d == 0 {
            return Err(fail(i, "layer size is not a positive integer"));
        }
        if i == 0 && act.is_some() {
            return Err(fail(i, "the input has no activation"));
        }
        dims.push(d);
        own.push(act);
    }
    let default = own.last().copied().flatten().unwrap_or(Activation::Relu);
    let hidden = dims.len() - 2;
    let mut activations: Vec<Activation> = own[1..=hidden].iter().map(|a| a.unwrap_or(default)).collect();
    activations.push(Activation::Identity);
    Ok(Arch { dims, activations })
}
