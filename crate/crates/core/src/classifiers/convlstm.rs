use serde::{Deserialize, Serialize};

use crate::classifiers::{check_classes, loss_head, permute_output_rows, Classifier, FeatureKind, DEFAULT_CLASSES};
use crate::error::{Error, Result};
use crate::nn::lstm::LstmTrace;
use crate::nn::ops::{tanh_backward, tanh_in_place};
use crate::nn::{Conv1d, Dense, Gradients, LstmLayer, OneHotTarget, ParameterSet, Tensor};
use crate::scalar::Scalar;
use crate::seed::rng_from;
use crate::signal::AXES;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLstmConfig {
    pub input: FeatureKind,
    /// Output channels of each convolution, strictly decreasing.
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub lstm_widths: Vec<usize>,
    pub classes: usize,
}

impl ConvLstmConfig {
    pub fn new(input: FeatureKind, conv_channels: Vec<usize>, kernel: usize, lstm_widths: Vec<usize>) -> Self {
        Self {
            input,
            conv_channels,
            kernel,
            lstm_widths,
            classes: DEFAULT_CLASSES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_classes(self.classes)?;
        if self.lstm_widths.is_empty() || self.lstm_widths.contains(&0) {
            return Err(Error::invalid("ConvLSTM needs positive LSTM widths"));
        }
        if self.conv_channels.contains(&0) {
            return Err(Error::invalid("conv channel counts must be positive"));
        }
        if self.conv_channels.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid(format!(
                "conv channel counts must strictly decrease: {:?}",
                self.conv_channels
            )));
        }
        if let FeatureKind::Window { steps } = self.input {
            if !self.conv_channels.is_empty() && self.kernel == 0 {
                return Err(Error::invalid("conv kernel length must be positive"));
            }
            let shrink = self.conv_channels.len() * self.kernel.saturating_sub(1);
            if steps <= shrink {
                return Err(Error::invalid(format!(
                    "{} convolutions of length {} leave nothing of {steps} steps",
                    self.conv_channels.len(),
                    self.kernel
                )));
            }
        }
        Ok(())
    }

    fn uses_conv(&self) -> bool {
        matches!(self.input, FeatureKind::Window { .. })
    }

    fn lstm_input_width(&self) -> usize {
        match self.input {
            FeatureKind::Window { .. } => self.conv_channels.last().copied().unwrap_or(AXES),
            FeatureKind::Latent { width } => width,
        }
    }
}

/// Convolutional spatial features, stacked LSTM temporal features, dense softmax head.
///
/// A window enters as a 3-channel sequence. A latent vector bypasses the
/// convolutions and enters the LSTM stack as a one-step sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmClassifier<S> {
    config: ConvLstmConfig,
    params: ParameterSet<S>,
    convs: Vec<Conv1d>,
    lstms: Vec<LstmLayer>,
    head: Dense,
    trained: bool,
}

struct Trace<S> {
    /// Conv inputs (channel-major) then the final conv activations.
    conv_acts: Vec<Vec<S>>,
    conv_lens: Vec<usize>,
    lstm_inputs: Vec<Vec<Vec<S>>>,
    lstm_traces: Vec<LstmTrace<S>>,
    logits: Vec<S>,
}

impl<S: Scalar> ConvLstmClassifier<S> {
    pub fn new(config: ConvLstmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from(seed);
        let mut params = ParameterSet::new();
        let mut convs = Vec::new();
        if config.uses_conv() {
            let mut in_ch = AXES;
            for (i, &out_ch) in config.conv_channels.iter().enumerate() {
                convs.push(Conv1d::new(&mut params, &format!("conv{i}"), in_ch, out_ch, config.kernel, &mut rng));
                in_ch = out_ch;
            }
        }
        let mut inputs = config.lstm_input_width();
        let mut lstms = Vec::new();
        for (i, &w) in config.lstm_widths.iter().enumerate() {
            lstms.push(LstmLayer::new(&mut params, &format!("lstm{i}"), inputs, w, &mut rng));
            inputs = w;
        }
        let head = Dense::new(&mut params, "head", inputs, config.classes, &mut rng);
        Ok(Self {
            config,
            params,
            convs,
            lstms,
            head,
            trained: false,
        })
    }

    pub fn from_parts(config: ConvLstmConfig, params: ParameterSet<S>, trained: bool) -> Result<Self> {
        config.validate()?;
        let convs: Vec<Conv1d> = if config.uses_conv() {
            (0..config.conv_channels.len())
                .map(|i| Conv1d::bind(&params, &format!("conv{i}")))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let lstms: Vec<LstmLayer> = (0..config.lstm_widths.len())
            .map(|i| LstmLayer::bind(&params, &format!("lstm{i}")))
            .collect::<Result<_>>()?;
        let head = Dense::bind(&params, "head")?;
        let mut in_ch = AXES;
        let mut ok = true;
        for (c, &out) in convs.iter().zip(&config.conv_channels) {
            ok &= c.in_channels == in_ch && c.out_channels == out && c.kernel == config.kernel;
            in_ch = out;
        }
        let mut inputs = config.lstm_input_width();
        for (l, &w) in lstms.iter().zip(&config.lstm_widths) {
            ok &= l.inputs == inputs && l.hidden == w;
            inputs = w;
        }
        ok &= head.inputs == inputs && head.outputs == config.classes;
        ok &= params.len() == 2 * convs.len() + 3 * lstms.len() + 2;
        if !ok {
            return Err(Error::Decode("ConvLSTM parameters disagree with configuration".into()));
        }
        Ok(Self {
            config,
            params,
            convs,
            lstms,
            head,
            trained,
        })
    }

    pub fn config(&self) -> &ConvLstmConfig {
        &self.config
    }

    pub fn head(&self) -> &Dense {
        &self.head
    }

    pub fn permute_outputs(&mut self, perm: &[usize]) -> Result<()> {
        let head = self.head.clone();
        permute_output_rows(&mut self.params, head.weight, head.bias, perm)
    }

    /// Copy of the model with one extra output channel on convolution `layer`
    /// whose kernels and bias are zero. The consumer's weights for the new
    /// channel are set to `consumer_fill`.
    pub fn with_zero_conv_channel(&self, layer: usize, consumer_fill: S) -> Result<Self> {
        if layer >= self.convs.len() {
            return Err(Error::invalid(format!("no convolution {layer}")));
        }
        let mut config = self.config.clone();
        config.conv_channels[layer] += 1;
        config.validate()?;
        let mut params = ParameterSet::new();
        for p in self.params.iter() {
            let name = p.name.as_str();
            let value = if name == format!("conv{layer}.weight") {
                let [out, inp, k] = [p.value.shape()[0], p.value.shape()[1], p.value.shape()[2]];
                let mut v = p.value.values().to_vec();
                v.extend(std::iter::repeat_n(S::zero(), inp * k));
                Tensor::new(vec![out + 1, inp, k], v)?
            } else if name == format!("conv{layer}.bias") {
                let mut v = p.value.values().to_vec();
                v.push(S::zero());
                Tensor::vector(v)?
            } else if name == format!("conv{}.weight", layer + 1) {
                let [out, inp, k] = [p.value.shape()[0], p.value.shape()[1], p.value.shape()[2]];
                let mut v = Vec::with_capacity(out * (inp + 1) * k);
                for o in 0..out {
                    v.extend_from_slice(&p.value.values()[o * inp * k..(o + 1) * inp * k]);
                    v.extend(std::iter::repeat_n(consumer_fill, k));
                }
                Tensor::new(vec![out, inp + 1, k], v)?
            } else if layer + 1 == self.convs.len() && name == "lstm0.w_input" {
                let [rows, cols] = [p.value.shape()[0], p.value.shape()[1]];
                let mut v = Vec::with_capacity(rows * (cols + 1));
                for r in 0..rows {
                    v.extend_from_slice(&p.value.values()[r * cols..(r + 1) * cols]);
                    v.push(consumer_fill);
                }
                Tensor::matrix(rows, cols + 1, v)?
            } else {
                p.value.clone()
            };
            params.add(name, value);
        }
        Self::from_parts(config, params, self.trained)
    }

    fn backward_trace(&self, trace: &Trace<S>, dlogits: &[S], grads: &mut Gradients<S>) {
        let top = trace.lstm_traces.last().expect("one LSTM layer");
        let dh_last = self.head.backward(&self.params, top.last_hidden(), dlogits, grads);

        let steps = trace.lstm_inputs[0].len();
        let mut dhs = vec![vec![S::zero(); dh_last.len()]; steps];
        dhs[steps - 1] = dh_last;
        for (i, layer) in self.lstms.iter().enumerate().rev() {
            let back = layer.backward(&self.params, &trace.lstm_inputs[i], &trace.lstm_traces[i], &dhs, grads);
            dhs = back.dxs;
        }

        if self.convs.is_empty() {
            return;
        }
        // dhs now holds time-major gradients of the last conv activations.
        let len = *trace.conv_lens.last().unwrap();
        let channels = dhs[0].len();
        let mut dact = vec![S::zero(); channels * len];
        for (t, d) in dhs.iter().enumerate() {
            for c in 0..channels {
                dact[c * len + t] = d[c];
            }
        }
        for (i, conv) in self.convs.iter().enumerate().rev() {
            let dz = tanh_backward(&trace.conv_acts[i + 1], &dact);
            dact = conv.backward(&self.params, &trace.conv_acts[i], trace.conv_lens[i], &dz, grads);
        }
    }

    fn forward_trace(&self, x: &[S]) -> Trace<S> {
        let mut conv_acts = Vec::new();
        let mut conv_lens = Vec::new();
        let sequence: Vec<Vec<S>> = match self.config.input {
            FeatureKind::Window { steps } => {
                let mut act = x.to_vec();
                let mut len = steps;
                for conv in &self.convs {
                    let mut y = conv.forward(&self.params, &act, len);
                    tanh_in_place(&mut y);
                    conv_acts.push(act);
                    conv_lens.push(len);
                    act = y;
                    len = conv.output_len(len);
                }
                let channels = act.len() / len;
                let seq = (0..len)
                    .map(|t| (0..channels).map(|c| act[c * len + t]).collect())
                    .collect();
                conv_acts.push(act);
                conv_lens.push(len);
                seq
            }
            FeatureKind::Latent { .. } => vec![x.to_vec()],
        };
        let mut lstm_inputs = Vec::with_capacity(self.lstms.len());
        let mut lstm_traces: Vec<LstmTrace<S>> = Vec::with_capacity(self.lstms.len());
        let mut xs = sequence;
        for layer in &self.lstms {
            let trace = layer.forward(&self.params, &xs, None, None);
            let next = trace.outputs().to_vec();
            lstm_inputs.push(xs);
            lstm_traces.push(trace);
            xs = next;
        }
        let logits = self
            .head
            .forward(&self.params, lstm_traces.last().expect("one LSTM layer").last_hidden());
        Trace {
            conv_acts,
            conv_lens,
            lstm_inputs,
            lstm_traces,
            logits,
        }
    }
}

impl<S: Scalar> Classifier<S> for ConvLstmClassifier<S> {
    fn feature_kind(&self) -> FeatureKind {
        self.config.input
    }

    fn classes(&self) -> usize {
        self.config.classes
    }

    fn params(&self) -> &ParameterSet<S> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParameterSet<S> {
        &mut self.params
    }

    fn logits(&self, features: &[S]) -> Result<Vec<S>> {
        self.config.input.check(features)?;
        Ok(self.forward_trace(features).logits)
    }

    fn backward_logits(&self, features: &[S], dlogits: &[S], grads: &mut Gradients<S>) -> Result<()> {
        self.config.input.check(features)?;
        let trace = self.forward_trace(features);
        self.backward_trace(&trace, dlogits, grads);
        Ok(())
    }

    fn accumulate_gradients(&self, features: &[S], label: usize, grads: &mut Gradients<S>) -> Result<(S, usize)> {
        self.config.input.check(features)?;
        let trace = self.forward_trace(features);
        let target = OneHotTarget::new(label, self.config.classes)?;
        let (loss, dlogits, predicted) = loss_head(&trace.logits, target)?;
        self.backward_trace(&trace, &dlogits, grads);
        Ok((loss, predicted))
    }

    fn is_trained(&self) -> bool {
        self.trained
    }

    fn mark_trained(&mut self) {
        self.trained = true;
    }
}
