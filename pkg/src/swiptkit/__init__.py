"""Signal-design toolkit for simultaneous wireless information and power
transfer: harvester modeling, constellation/codebook design, end-to-end
learned modulation, and Monte Carlo link evaluation.
"""

from .autoencoder import (
    AeSystem,
    MlpParams,
    Topology,
    TrainConfig,
    TrainDivergedError,
    build_system,
    composite_loss,
    encode_all,
    evaluate_ser,
    extract_design,
    gradient_check,
    load_system,
    make_decoder,
    save_system,
    train,
)
from .channel import (
    ChannelSpec,
    SerResult,
    TradeoffPoint,
    awgn,
    delivered_power_mc,
    delivered_power_noiseless,
    qam_reference,
    qfunc,
    rp_sweep,
    ser_mc,
    write_sweep_csv,
)
from .codebook import (
    Codebook,
    GreedyConfig,
    OnOffBlockCode,
    build_info_codebook,
    codebook_min_dist,
    decode_onoff_block,
    decode_onoff_block_many,
    onoff_block_code,
    swipt_codebook,
)
from .constellation import (
    Constellation,
    circle_capacity,
    layout_info,
    m_on_count,
    swipt_transform,
)
from .harvester import (
    EhModel,
    FitDivergedError,
    FitHyper,
    ModelC,
    OnOffLaw,
    PowerDataset,
    canonical_curve,
    canonical_model,
    eval_eh,
    fit_eh,
    model_c_eval,
    onoff_delivered,
    optimal_pon,
    pon_approx,
    synth_dataset,
)

__version__ = "0.1.0"
