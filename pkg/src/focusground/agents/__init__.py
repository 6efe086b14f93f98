from .remote import ChatRequest, ChatResponse, RemotePolicy, RemoteSettings, remote_complete
from .screens import ScreenConfig, SyntheticScreen, generate_screen
from .scripted import FunctionPolicy, ScriptedPolicy
from .toy import ToyPolicy, ToyPolicyParams, toy_act, toy_logprob

__all__ = [
    "ChatRequest", "ChatResponse", "FunctionPolicy", "RemotePolicy", "RemoteSettings",
    "ScreenConfig", "ScriptedPolicy", "SyntheticScreen", "ToyPolicy", "ToyPolicyParams",
    "generate_screen", "remote_complete", "toy_act", "toy_logprob",
]
