"""Round orchestration: participants, the blind server and transcripts."""
from .roles import (
    BlindnessViolation,
    ParticipantState,
    ProtocolError,
    ServerState,
    distribute_keys,
    ring_neighbors,
)
from .rounds import (
    PhiReportMismatchError,
    PhiVerdict,
    RoundOutcome,
    RoundPlan,
    run_round_fedsgd,
    run_round_fflx,
    run_round_gbppffl,
    run_round_standalone,
    verify_phi_reports,
    verify_reports,
)
from .transcript import RoundTranscript, TranscriptWriter, read_transcript

__all__ = [
    'BlindnessViolation', 'ParticipantState', 'ProtocolError', 'ServerState', 'distribute_keys',
    'ring_neighbors', 'PhiReportMismatchError', 'PhiVerdict', 'RoundOutcome', 'RoundPlan',
    'run_round_fedsgd', 'run_round_fflx', 'run_round_gbppffl', 'run_round_standalone',
    'verify_phi_reports', 'verify_reports', 'RoundTranscript', 'TranscriptWriter',
    'read_transcript',
]
