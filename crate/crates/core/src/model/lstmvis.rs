//! The mask visualization network: the LSTM branch followed by its own
//! fully connected head, trained standalone so deletion masks can be
//! optimized against a purely recurrent scorer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{BnMode, BnStats, NodeId, ParamSet, Tape};
use crate::error::Result;
use crate::kvtext;
use crate::model::layers::{register_dense, register_lstm, Ctx, DenseIdx, LstmIdx};
use crate::model::{LogitsGraph, LstmVisConfig, Network};

#[derive(Debug, Clone)]
pub struct LstmVisModel {
    config: LstmVisConfig,
    params: ParamSet,
    bn_running: Vec<BnStats>,
    lstm: LstmIdx,
    fc: Vec<DenseIdx>,
}

impl LstmVisModel {
    pub fn new(config: LstmVisConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let lstm = register_lstm(
            &mut params,
            &mut rng,
            "lstm",
            config.lstm_hidden,
            config.lstm_step,
        );
        let mut fc = Vec::new();
        let mut in_dim = config.lstm_hidden;
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
        Ok(LstmVisModel {
            config,
            params,
            bn_running: Vec::new(),
            lstm,
            fc,
        })
    }

    pub fn config(&self) -> &LstmVisConfig {
        &self.config
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::model::save_network(self, path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (ckpt, meta) = crate::model::load_checkpoint(path, "lstmvis")?;
        let config = LstmVisConfig {
            lstm_step: kvtext::get_parsed(&meta, "lstm_step")?,
            lstm_hidden: kvtext::get_parsed(&meta, "lstm_hidden")?,
            fc_widths: kvtext::get_list(&meta, "fc_widths")?,
            classes: kvtext::get_parsed(&meta, "classes")?,
            input_len: kvtext::get_parsed(&meta, "input_len")?,
        };
        let mut model = LstmVisModel::new(config, 0)?;
        crate::model::apply_checkpoint(&mut model, &ckpt)?;
        Ok(model)
    }
}

impl Network for LstmVisModel {
    fn kind(&self) -> &'static str {
        "lstmvis"
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
        _mode: BnMode,
        param_grads: bool,
    ) -> Result<LogitsGraph> {
        let param_nodes = Ctx::param_leaves(tape, &self.params, param_grads);
        let mut ctx = Ctx {
            tape,
            param_nodes: &param_nodes,
            bn_running: &self.bn_running,
            mode: _mode,
        };
        let chunked = ctx
            .tape
            .reshape(x, vec![self.config.lstm_steps(), self.config.lstm_step])?;
        let mut h = ctx.lstm(chunked, self.lstm)?;
        let last = self.fc.len() - 1;
        for (i, d) in self.fc.iter().enumerate() {
            h = ctx.dense(h, *d)?;
            if i != last {
                h = ctx.tape.relu(h);
            }
        }
        Ok(LogitsGraph {
            logits: h,
            param_nodes,
        })
    }

    fn config_kv(&self) -> String {
        let c = &self.config;
        format!(
            "lstm_step = {}\nlstm_hidden = {}\nfc_widths = {}\nclasses = {}\ninput_len = {}\n",
            c.lstm_step,
            c.lstm_hidden,
            kvtext::join_list(&c.fc_widths),
            c.classes,
            c.input_len,
        )
    }
}
