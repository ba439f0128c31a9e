//! The dual-branch classification network: an inception block feeding a
//! residual CNN stack, a many-to-one LSTM over chunked input, and a fully
//! connected head over the concatenated branch features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{softmax, BnMode, BnStats, NodeId, Padding, ParamSet, Tape};
use crate::error::Result;
use crate::kvtext;
use crate::model::layers::{
    register_bn, register_conv, register_dense, register_lstm, register_res_unit, ConvBn, Ctx,
    DenseIdx, LstmIdx, ResUnitIdx,
};
use crate::model::{input_leaf, ClassifierConfig, LogitsGraph, Network};

#[derive(Debug, Clone)]
struct Arch {
    inception_branches: Vec<ConvBn>,
    inception_fuse: ConvBn,
    res_units: Vec<ResUnitIdx>,
    reduce: ConvBn,
    lstm: LstmIdx,
    fc: Vec<DenseIdx>,
}

#[derive(Debug, Clone)]
pub struct ClassifierModel {
    config: ClassifierConfig,
    params: ParamSet,
    bn_running: Vec<BnStats>,
    arch: Arch,
}

/// Forward trace of one window through the classifier.
#[derive(Debug, Clone)]
pub struct ClassifierTrace {
    /// Flattened CNN branch features.
    pub cnn_features: Vec<f64>,
    /// Final LSTM hidden state.
    pub lstm_features: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

struct ClassifierGraph {
    logits: NodeId,
    cnn_features: NodeId,
    lstm_features: NodeId,
    param_nodes: Vec<NodeId>,
}

impl ClassifierModel {
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut bn_running = Vec::new();

        let inception_branches: Vec<ConvBn> = config
            .inception_kernels
            .iter()
            .enumerate()
            .map(|(i, k)| ConvBn {
                conv: register_conv(
                    &mut params,
                    &mut rng,
                    &format!("inception.branch{i}"),
                    config.branch_channels,
                    1,
                    *k,
                ),
                bn: register_bn(
                    &mut params,
                    &mut bn_running,
                    &format!("inception.branch{i}_bn"),
                    config.branch_channels,
                ),
            })
            .collect();
        let inception_fuse = ConvBn {
            conv: register_conv(
                &mut params,
                &mut rng,
                "inception.fuse",
                config.base_channels,
                config.branch_channels * config.inception_kernels.len(),
                1,
            ),
            bn: register_bn(
                &mut params,
                &mut bn_running,
                "inception.fuse_bn",
                config.base_channels,
            ),
        };

        let mut res_units = Vec::with_capacity(config.residual_units);
        let mut in_channels = config.base_channels;
        for i in 0..config.residual_units {
            let out_channels = config.unit_channels(i);
            res_units.push(register_res_unit(
                &mut params,
                &mut bn_running,
                &mut rng,
                &format!("res{i}"),
                in_channels,
                out_channels,
                config.residual_kernel,
                config.pool_strides[i],
            ));
            in_channels = out_channels;
        }

        let reduce = ConvBn {
            conv: register_conv(
                &mut params,
                &mut rng,
                "reduce",
                config.base_channels,
                in_channels,
                1,
            ),
            bn: register_bn(&mut params, &mut bn_running, "reduce_bn", config.base_channels),
        };

        let lstm = register_lstm(
            &mut params,
            &mut rng,
            "lstm",
            config.lstm_hidden,
            config.lstm_step,
        );

        let mut fc = Vec::new();
        let mut in_dim = config.concat_len()?;
        for (i, width) in config.fc_widths.iter().enumerate() {
            fc.push(register_dense(
                &mut params,
                &mut rng,
                &format!("fc{i}"),
                *width,
                in_dim,
            ));
            in_dim = *width;
        }
        fc.push(register_dense(
            &mut params,
            &mut rng,
            "fc_out",
            config.classes,
            in_dim,
        ));

        Ok(ClassifierModel {
            config,
            params,
            bn_running,
            arch: Arch {
                inception_branches,
                inception_fuse,
                res_units,
                reduce,
                lstm,
                fc,
            },
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    fn build_graph(
        &self,
        tape: &mut Tape,
        x: NodeId,
        mode: BnMode,
        param_grads: bool,
    ) -> Result<ClassifierGraph> {
        let param_nodes = Ctx::param_leaves(tape, &self.params, param_grads);
        let mut ctx = Ctx {
            tape,
            param_nodes: &param_nodes,
            bn_running: &self.bn_running,
            mode,
        };

        // CNN branch
        let x2d = ctx.tape.reshape(x, vec![1, self.config.input_len])?;
        let mut merged: Option<NodeId> = None;
        for cb in &self.arch.inception_branches {
            let branch = ctx.conv_bn_relu(x2d, *cb, Padding::Same)?;
            merged = Some(match merged {
                Some(acc) => ctx.tape.concat(acc, branch),
                None => branch,
            });
        }
        let stacked = ctx.tape.reshape(
            merged.expect("at least one inception branch"),
            vec![
                self.config.branch_channels * self.config.inception_kernels.len(),
                self.config.input_len,
            ],
        )?;
        let mut feat = ctx.conv_bn_relu(stacked, self.arch.inception_fuse, Padding::Same)?;
        for unit in &self.arch.res_units {
            feat = ctx.res_unit(feat, unit)?;
        }
        let reduced = ctx.conv_bn_relu(feat, self.arch.reduce, Padding::Same)?;
        let cnn_features = ctx
            .tape
            .reshape(reduced, vec![self.config.cnn_feature_len()?])?;

        // LSTM branch
        let chunked = ctx
            .tape
            .reshape(x, vec![self.config.lstm_steps(), self.config.lstm_step])?;
        let lstm_features = ctx.lstm(chunked, self.arch.lstm)?;

        // FC head
        let mut h = ctx.tape.concat(cnn_features, lstm_features);
        let last = self.arch.fc.len() - 1;
        for (i, d) in self.arch.fc.iter().enumerate() {
            h = ctx.dense(h, *d)?;
            if i != last {
                h = ctx.tape.relu(h);
            }
        }
        Ok(ClassifierGraph {
            logits: h,
            cnn_features,
            lstm_features,
            param_nodes,
        })
    }

    /// Eval-mode forward pass exposing the branch features.
    pub fn forward(&self, samples: &[f64]) -> Result<ClassifierTrace> {
        let mut tape = Tape::new();
        let x = input_leaf(self, &mut tape, samples)?;
        let graph = self.build_graph(&mut tape, x, BnMode::Eval, false)?;
        let logits = tape.value(graph.logits).values().to_vec();
        let probs = softmax(&logits);
        Ok(ClassifierTrace {
            cnn_features: tape.value(graph.cnn_features).values().to_vec(),
            lstm_features: tape.value(graph.lstm_features).values().to_vec(),
            logits,
            probs,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::model::save_network(self, path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (ckpt, meta) = crate::model::load_checkpoint(path, "classifier")?;
        let config = ClassifierConfig {
            inception_kernels: {
                let ks: Vec<usize> = kvtext::get_list(&meta, "inception_kernels")?;
                ks.try_into().map_err(|_| {
                    crate::error::Error::Checkpoint("expected 4 inception kernels".to_string())
                })?
            },
            branch_channels: kvtext::get_parsed(&meta, "branch_channels")?,
            base_channels: kvtext::get_parsed(&meta, "base_channels")?,
            residual_units: kvtext::get_parsed(&meta, "residual_units")?,
            residual_kernel: kvtext::get_parsed(&meta, "residual_kernel")?,
            pool_strides: kvtext::get_list(&meta, "pool_strides")?,
            lstm_step: kvtext::get_parsed(&meta, "lstm_step")?,
            lstm_hidden: kvtext::get_parsed(&meta, "lstm_hidden")?,
            fc_widths: kvtext::get_list(&meta, "fc_widths")?,
            classes: kvtext::get_parsed(&meta, "classes")?,
            input_len: kvtext::get_parsed(&meta, "input_len")?,
        };
        let mut model = ClassifierModel::new(config, 0)?;
        crate::model::apply_checkpoint(&mut model, &ckpt)?;
        Ok(model)
    }
}

impl Network for ClassifierModel {
    fn kind(&self) -> &'static str {
        "classifier"
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn bn_running(&self) -> &[BnStats] {
        &self.bn_running
    }

    fn bn_running_mut(&mut self) -> &mut [BnStats] {
        &mut self.bn_running
    }

    fn input_len(&self) -> usize {
        self.config.input_len
    }

    fn classes(&self) -> usize {
        self.config.classes
    }

    fn build_logits(
        &self,
        tape: &mut Tape,
        x: NodeId,
        mode: BnMode,
        param_grads: bool,
    ) -> Result<LogitsGraph> {
        let graph = self.build_graph(tape, x, mode, param_grads)?;
        Ok(LogitsGraph {
            logits: graph.logits,
            param_nodes: graph.param_nodes,
        })
    }

    fn config_kv(&self) -> String {
        let c = &self.config;
        format!(
            "inception_kernels = {}\nbranch_channels = {}\nbase_channels = {}\n\
             residual_units = {}\nresidual_kernel = {}\npool_strides = {}\n\
             lstm_step = {}\nlstm_hidden = {}\nfc_widths = {}\nclasses = {}\ninput_len = {}\n",
            kvtext::join_list(&c.inception_kernels),
            c.branch_channels,
            c.base_channels,
            c.residual_units,
            c.residual_kernel,
            kvtext::join_list(&c.pool_strides),
            c.lstm_step,
            c.lstm_hidden,
            kvtext::join_list(&c.fc_widths),
            c.classes,
            c.input_len,
        )
    }
}
