"""abmlink: couple a live agent-based simulation to interactive remote clients.

The package splits along the wire: ``protocol`` defines the message
vocabulary and codec, ``geometry`` the feature/transform primitives,
``kernel`` the stepwise simulation engine, ``linker`` the coupling of
connected clients to the world, ``broker`` the multi-player session
service, and ``scenarios`` two runnable demonstration models.
"""

from .geometry import (
    EntitySnapshot,
    GeometryFeature,
    SimTransform,
    from_client_point,
    heading_to_yaw,
    import_features,
    export_features,
    to_client_point,
    yaw_to_heading,
)
from .kernel import ActionDef, Agent, Bounds, SpeciesDef, World
from .linker import Linker, PlayerAgentBinding, SessionFull, StaleBinding
from .manifest import CouplingManifest, SpeciesSyncSpec, load_manifest, save_manifest
from .protocol import (
    Message,
    PROTOCOL_VERSION,
    decode_message,
    encode_message,
    validate_handshake,
)

__version__ = "0.1.0"

__all__ = [
    "ActionDef",
    "Agent",
    "Bounds",
    "CouplingManifest",
    "EntitySnapshot",
    "GeometryFeature",
    "Linker",
    "Message",
    "PROTOCOL_VERSION",
    "PlayerAgentBinding",
    "SessionFull",
    "SimTransform",
    "SpeciesDef",
    "SpeciesSyncSpec",
    "StaleBinding",
    "World",
    "decode_message",
    "encode_message",
    "export_features",
    "from_client_point",
    "heading_to_yaw",
    "import_features",
    "load_manifest",
    "save_manifest",
    "to_client_point",
    "validate_handshake",
    "yaw_to_heading",
]
