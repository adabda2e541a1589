from .engine import (
    EnsembleSource,
    Estimation,
    IdealSource,
    InsufficientData,
    PhaseTag,
    ProtocolConfig,
    ProtocolRun,
    PublicTestData,
    RoundRecord,
    RoundTable,
    RunStatus,
    assign_roles,
    parameter_estimation,
    run_measurement_phase,
    run_protocol,
    select_test_rounds,
)
from .keys import KeyBlock, block_parities, distill_key
from .messages import Announcement, Kind, Sender, Transcript, TranscriptMessage
from .parties import (
    InsufficientBits,
    Party,
    ProtocolStateError,
    UndecodableBases,
    decodable,
    decode_round,
    encode_round,
    phi_decodable,
)
