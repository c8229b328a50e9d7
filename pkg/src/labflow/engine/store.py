"""Content-addressed artifact store.

Layout under the store root:
    objects/<d0d1>/<sha256>      content bytes, written atomically
    meta/<artifact-id>.json      sidecar metadata per artifact

Artifact ids are ``<kind>-<digest12>`` so identical content of the same
kind dedupes to one artifact while remaining stable across runs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional

from ..errors import StorageFailure
from ..jsonutil import atomic_write_bytes, atomic_write_text, canonical_dumps, sha256_hex
from .state import Artifact, ArtifactId


class ArtifactStore:
    def __init__(self, root: Path) -> None:
        self.root = Path(root)
        self.objects = self.root / "objects"
        self.meta_dir = self.root / "meta"

    def _object_path(self, digest: str) -> Path:
        return self.objects / digest[:2] / digest

    def put_bytes(self, content: bytes) -> str:
        """Store raw bytes, return their digest (idempotent)."""
        digest = sha256_hex(content)
        path = self._object_path(digest)
        if not path.exists():
            try:
                atomic_write_bytes(path, content)
            except OSError as exc:
                raise StorageFailure(f"cannot store object: {exc}") from exc
        return digest

    def put(
        self,
        content: bytes,
        *,
        kind: str,
        name: str,
        media_type: str,
        provenance: Iterable[ArtifactId] = (),
        meta: Optional[dict] = None,
    ) -> Artifact:
        digest = self.put_bytes(content)
        artifact = Artifact(
            id=f"{kind}-{digest[:12]}",
            kind=kind,
            name=name,
            media_type=media_type,
            digest=digest,
            size=len(content),
            provenance=tuple(provenance),
            meta=dict(meta or {}),
        )
        self.write_sidecar(artifact)
        return artifact

    def write_sidecar(self, artifact: Artifact) -> None:
        atomic_write_text(
            self.meta_dir / f"{artifact.id}.json", canonical_dumps(artifact.to_dict())
        )

    def get_bytes(self, ref: Artifact | str) -> bytes:
        digest = ref.digest if isinstance(ref, Artifact) else ref
        path = self._object_path(digest)
        try:
            return path.read_bytes()
        except OSError as exc:
            raise StorageFailure(f"missing object {digest[:12]}") from exc

    def has(self, digest: str) -> bool:
        return self._object_path(digest).exists()

    def object_path(self, ref: Artifact | str) -> Path:
        digest = ref.digest if isinstance(ref, Artifact) else ref
        return self._object_path(digest)
