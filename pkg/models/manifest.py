from dataclasses import dataclass, field
from datetime import datetime, timezone


@dataclass
class RunManifest:
    """Record of one command run: what went in, with which parameters, by which version."""
    command: str
    inputs: dict = field(default_factory=dict)       # role -> {'path', 'sha256'}
    parameters: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    tool_version: str = ''
    created_at: str = None

    # Command names
    FIT_ERRORS = 'fit-errors'
    SWEEP = 'sweep'
    VALIDATE = 'validate'
    PF = 'pf'
    PLOT = 'plot'

    def stamp(self):
        self.created_at = datetime.now(timezone.utc).isoformat(timespec='seconds')
        return self

    def to_dict(self):
        return {
            'command': self.command,
            'inputs': self.inputs,
            'parameters': self.parameters,
            'outputs': self.outputs,
            'tool_version': self.tool_version,
            'created_at': self.created_at,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            command=data['command'],
            inputs=dict(data.get('inputs', {})),
            parameters=dict(data.get('parameters', {})),
            outputs=list(data.get('outputs', [])),
            tool_version=data.get('tool_version', ''),
            created_at=data.get('created_at'),
        )

    def __repr__(self):
        return f'<RunManifest {self.command} at {self.created_at}>'
