//! The CAM visualization network: a short residual stack whose final feature
//! map feeds global average pooling and a single linear map, so per-class
//! activation maps can be read directly off the feature map.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{softmax, BnMode, BnStats, NodeId, ParamSet, Tape, Tensor};
use crate::error::Result;
use crate::kvtext;
use crate::model::layers::{register_dense, register_res_unit, Ctx, DenseIdx, ResUnitIdx};
use crate::model::{input_leaf, CamNetConfig, LogitsGraph, Network};

#[derive(Debug, Clone)]
pub struct CamNetModel {
    config: CamNetConfig,
    params: ParamSet,
    bn_running: Vec<BnStats>,
    res_units: Vec<ResUnitIdx>,
    head: DenseIdx,
}

/// Forward trace exposing the final convolutional feature map.
#[derive(Debug, Clone)]
pub struct CamTrace {
    /// `[channels, feature_len]` activations before pooling.
    pub feature_map: Tensor,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl CamNetModel {
    pub fn new(config: CamNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut bn_running = Vec::new();
        let mut res_units = Vec::with_capacity(config.residual_units);
        let mut in_channels = 1;
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
        let head = register_dense(&mut params, &mut rng, "head", config.classes, in_channels);
        Ok(CamNetModel {
            config,
            params,
            bn_running,
            res_units,
            head,
        })
    }

    pub fn config(&self) -> &CamNetConfig {
        &self.config
    }

    /// The linear-map weights for one class, indexed by feature channel.
    pub fn class_weights(&self, class: usize) -> &[f64] {
        let k = self.config.feature_channels();
        &self.params.tensor(self.head.w).values()[class * k..(class + 1) * k]
    }

    pub fn class_bias(&self, class: usize) -> f64 {
        self.params.tensor(self.head.b).values()[class]
    }

    fn build_graph(
        &self,
        tape: &mut Tape,
        x: NodeId,
        mode: BnMode,
        param_grads: bool,
    ) -> Result<(NodeId, NodeId, Vec<NodeId>)> {
        let param_nodes = Ctx::param_leaves(tape, &self.params, param_grads);
        let mut ctx = Ctx {
            tape,
            param_nodes: &param_nodes,
            bn_running: &self.bn_running,
            mode,
        };
        let mut feat = ctx.tape.reshape(x, vec![1, self.config.input_len])?;
        for unit in &self.res_units {
            feat = ctx.res_unit(feat, unit)?;
        }
        let pooled = ctx.tape.gap(feat)?;
        let logits = ctx.dense(pooled, self.head)?;
        Ok((logits, feat, param_nodes))
    }

    /// Eval-mode forward pass returning the feature map alongside logits.
    pub fn forward_features(&self, samples: &[f64]) -> Result<CamTrace> {
        let mut tape = Tape::new();
        let x = input_leaf(self, &mut tape, samples)?;
        let (logits_id, feat_id, _) = self.build_graph(&mut tape, x, BnMode::Eval, false)?;
        let logits = tape.value(logits_id).values().to_vec();
        let probs = softmax(&logits);
        Ok(CamTrace {
            feature_map: tape.value(feat_id).clone(),
            logits,
            probs,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::model::save_network(self, path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (ckpt, meta) = crate::model::load_checkpoint(path, "camnet")?;
        let config = CamNetConfig {
            base_channels: kvtext::get_parsed(&meta, "base_channels")?,
            residual_units: kvtext::get_parsed(&meta, "residual_units")?,
            residual_kernel: kvtext::get_parsed(&meta, "residual_kernel")?,
            pool_strides: kvtext::get_list(&meta, "pool_strides")?,
            classes: kvtext::get_parsed(&meta, "classes")?,
            input_len: kvtext::get_parsed(&meta, "input_len")?,
            feature_len: kvtext::get_parsed(&meta, "feature_len")?,
        };
        let mut model = CamNetModel::new(config, 0)?;
        crate::model::apply_checkpoint(&mut model, &ckpt)?;
        Ok(model)
    }
}

impl Network for CamNetModel {
    fn kind(&self) -> &'static str {
        "camnet"
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
        let (logits, _, param_nodes) = self.build_graph(tape, x, mode, param_grads)?;
        Ok(LogitsGraph {
            logits,
            param_nodes,
        })
    }

    fn config_kv(&self) -> String {
        let c = &self.config;
        format!(
            "base_channels = {}\nresidual_units = {}\nresidual_kernel = {}\n\
             pool_strides = {}\nclasses = {}\ninput_len = {}\nfeature_len = {}\n",
            c.base_channels,
            c.residual_units,
            c.residual_kernel,
            kvtext::join_list(&c.pool_strides),
            c.classes,
            c.input_len,
            c.feature_len,
        )
    }
}
