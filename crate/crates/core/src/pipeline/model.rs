use super::config::RunConfig;
use crate::error::Result;
use crate::ops::{Activation, ConvKernel, LinearTransform, Mlp, ParamSource, SFM_DILATIONS};

/// Number of 3x3 convolutions in the stage-0 dense stack.
pub const STAGE0_CONVS: usize = 4;

#[derive(Debug, Clone)]
pub struct Stage0Weights {
    /// `(F_0 + F_q) -> F_0 -> F_0`, added to every cell.
    pub query_fuse: Mlp,
    /// `F_0 -> F_0`, each followed by a ReLU.
    pub convs: Vec<ConvKernel>,
    pub seg: Mlp,
    pub refine: Mlp,
}

#[derive(Debug, Clone)]
pub struct StageWeights {
    /// One `F -> F -> F` MLP per child position, row-major.
    pub children: Vec<Mlp>,
    /// `(F + C) -> F -> F`, added to every active cell.
    pub neck_fuse: Mlp,
    /// `F -> F / 2`.
    pub halve: LinearTransform,
    /// Branches at dilations 1, 3 and 5.
    pub sfm: Vec<ConvKernel>,
    pub seg: Mlp,
    pub refine: Mlp,
}

/// All parameters of a refinement head. Array names follow
/// `stage0.{query_fuse,conv0..3,seg,refine}` and
/// `stage{s}.{child0..3,neck_fuse,halve,sfm.d1,sfm.d3,sfm.d5,seg,refine}`,
/// each with `.weight` and `.bias` (MLP layers add `.0` / `.1`).
#[derive(Debug, Clone)]
pub struct Model {
    pub f0: usize,
    /// Channels of the neck features.
    pub channels: usize,
    pub query_dim: usize,
    pub stage0: Stage0Weights,
    /// Stages 1 and up.
    pub stages: Vec<StageWeights>,
}

impl Model {
    pub fn load(params: &ParamSource, cfg: &RunConfig, channels: usize, query_dim: usize) -> Result<Model> {
        cfg.validate()?;
        let f0 = cfg.f0;
        let convs = (0..STAGE0_CONVS)
            .map(|i| params.conv(&format!("stage0.conv{i}"), f0, 3, 1))
            .collect::<Result<_>>()?;
        let stage0 = Stage0Weights {
            query_fuse: params.mlp2("stage0.query_fuse", f0 + query_dim, f0, f0)?,
            convs,
            seg: params.mlp2("stage0.seg", f0, f0, 1)?,
            refine: params.mlp2("stage0.refine", f0, f0, 1)?,
        };
        let mut stages = Vec::new();
        for s in 1..=cfg.stages {
            let f = cfg.f0 >> (s - 1);
            let half = f / 2;
            let p = format!("stage{s}");
            stages.push(StageWeights {
                children: (0..4)
                    .map(|j| params.mlp2(&format!("{p}.child{j}"), f, f, f))
                    .collect::<Result<_>>()?,
                neck_fuse: params.mlp2(&format!("{p}.neck_fuse"), f + channels, f, f)?,
                halve: params.linear(&format!("{p}.halve"), f, half, Activation::None)?,
                sfm: SFM_DILATIONS
                    .iter()
                    .map(|&d| params.conv(&format!("{p}.sfm.d{d}"), half, 3, d))
                    .collect::<Result<_>>()?,
                seg: params.mlp2(&format!("{p}.seg"), half, half, 1)?,
                refine: params.mlp2(&format!("{p}.refine"), half, half, 1)?,
            });
        }
        Ok(Model {
            f0,
            channels,
            query_dim,
            stage0,
            stages,
        })
    }
}
