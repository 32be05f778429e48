"""Telemetry/command service: fans live, replayed or simulated pipeline
output to socket clients as newline-delimited JSON records.

One pipeline worker owns all state machines; each client gets a bounded
outgoing queue so a slow consumer is dropped rather than stalling frames.
Commands arrive on the same connection, one JSON object per line, and are
answered with an ack diag message. An optional WebSocket listener speaks the
same line protocol inside text frames so browsers can connect directly.
"""

from __future__ import annotations

import base64
import hashlib
import json
import queue
import socket
import struct
import threading
import time

from .config import stage_from_dict, stage_to_dict, zone_from_dict
from .errors import ConfigError, StageTrackError, UnknownScene, UnknownZone
from .eventlog import rec_diag
from .fusion import FilterParams, ImuSample
from .geometry import StageConfig, Vec3, coverage_map
from .pipeline import TrackingPipeline
from .ranging import RangeMeasurement
from .show import END, force_scene
from .sim import MotionScript, NoiseModel, SimWorld
from .solver import PositionFix, SolveOptions
from . import wire

import numpy as np

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
_CLIENT_QUEUE_LIMIT = 1024

# Log record kind -> telemetry message kind. Absent kinds stay internal.
_KIND_MAP = {
    "fix": "position",
    "track": "track",
    "zone_event": "zone_event",
    "scene": "scene",
    "diag": "diag",
}


def record_to_message(record: dict) -> dict | None:
    """Wrap a log record into a TelemetryMessage, or None if internal-only."""
    kind = _KIND_MAP.get(record.get("kind"))
    if kind is None:
        return None
    payload = {k: v for k, v in record.items() if k not in ("kind", "frame")}
    return {
        "kind": kind,
        "frame": record.get("frame", -1),
        "wallclock_ms": int(time.time() * 1000),
        "payload": payload,
    }


def _coverage_message(stage: StageConfig, params: dict) -> dict:
    grid = coverage_map(
        stage,
        cell_size=float(params.get("cell_size", 0.25)),
        hdop_max=float(params.get("hdop_max", 6.0)),
        min_anchors=int(params.get("min_anchors", 3)),
        eval_height=float(params.get("eval_height", 1.0)),
    )
    return {
        "kind": "coverage",
        "frame": -1,
        "wallclock_ms": int(time.time() * 1000),
        "payload": {
            "cell_size": grid.cell_size,
            "nx": grid.nx,
            "ny": grid.ny,
            "covered_fraction": grid.covered_fraction,
            "cells": [
                [ix, iy, anchors, hdop, covered]
                for ix, iy, anchors, hdop, covered in grid.csv_rows()
            ],
        },
    }


class _SourceBase:
    """Shared command handling and snapshot bookkeeping for all sources."""

    def __init__(self, stage: StageConfig, fps: float):
        self.stage = stage
        self.fps = fps
        self.server: "TelemetryServer | None" = None
        self.lock = threading.RLock()
        self.paused = threading.Event()
        self.source_kind = "base"
        self._latest_tracks: dict[int, dict] = {}
        self._zone_states: dict[str, dict] = {}
        self._current_scene = stage.scenes[0].id if stage.scenes else END
        self._frame = -1

    # -- emitting ---------------------------------------------------------
    def emit_record(self, record: dict) -> None:
        kind = record.get("kind")
        if kind == "track":
            self._latest_tracks[record["tag"]] = record
        elif kind == "zone_event":
            self._zone_states[record["zone"]] = record
        elif kind == "scene":
            self._current_scene = record["to"]
        if record.get("frame") is not None:
            self._frame = max(self._frame, record.get("frame", -1))
        message = record_to_message(record)
        if message is not None and self.server is not None:
            self.server.broadcast(message)

    def snapshot(self) -> list[dict]:
        """Messages that let a newly connected console rebuild its display."""
        with self.lock:
            return [
                {
                    "kind": "diag",
                    "frame": self._frame,
                    "wallclock_ms": int(time.time() * 1000),
                    "payload": {
                        "event": "snapshot",
                        "source": self.source_kind,
                        "fps": self.fps,
                        "stage": stage_to_dict(self.stage),
                        "scene": self._current_scene,
                        "zone_states": self._zone_states,
                        "tracks": list(self._latest_tracks.values()),
                    },
                }
            ]

    # -- commands ---------------------------------------------------------
    def handle_command(self, cmd: dict) -> dict:
        kind = cmd.get("kind")
        handlers = {
            "move_tag": self._cmd_move_tag,
            "force_scene": self._cmd_force_scene,
            "update_zone": self._cmd_update_zone,
            "pause": self._cmd_pause,
            "resume": self._cmd_resume,
            "get_coverage": self._cmd_get_coverage,
        }
        handler = handlers.get(kind)
        if handler is None:
            return {"ok": False, "message": f"unknown command kind {kind!r}"}
        try:
            with self.lock:
                return handler(cmd)
        except (StageTrackError, ConfigError, KeyError, TypeError, ValueError) as e:
            return {"ok": False, "message": f"{type(e).__name__}: {e}"}

    def _cmd_move_tag(self, cmd: dict) -> dict:
        return {"ok": False, "message": "move_tag is valid only against a simulation source"}

    def _cmd_force_scene(self, cmd: dict) -> dict:
        raise UnknownScene("force_scene not supported by this source")

    def _cmd_update_zone(self, cmd: dict) -> dict:
        raise UnknownZone("update_zone not supported by this source")

    def _cmd_pause(self, cmd: dict) -> dict:
        self.paused.set()
        return {"ok": True, "message": "paused"}

    def _cmd_resume(self, cmd: dict) -> dict:
        self.paused.clear()
        return {"ok": True, "message": "resumed"}

    def _cmd_get_coverage(self, cmd: dict) -> dict:
        message = _coverage_message(self.stage, cmd)
        return {"ok": True, "message": "coverage computed", "reply": message}

    # -- lifecycle --------------------------------------------------------
    def run(self, stop: threading.Event) -> None:  # pragma: no cover - overridden
        raise NotImplementedError

    def _wait_for_first_client(self, stop: threading.Event) -> None:
        """Hold the stream until someone is listening, so short replays are
        not emitted into the void before the first console connects."""
        if self.server is None:
            return
        while not stop.is_set() and not self.server.client_connected.wait(timeout=0.05):
            pass

    def _sleep_frame(self, stop: threading.Event, dt: float) -> None:
        deadline = time.monotonic() + dt
        while not stop.is_set():
            if self.paused.is_set():
                time.sleep(0.01)
                deadline = time.monotonic()  # do not rush after resume
                continue
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return
            time.sleep(min(remaining, 0.05))


class ReplaySource(_SourceBase):
    """Re-emits a recorded event log at its frame rate (times a speed factor)."""

    def __init__(self, records: list[dict], speed: float = 1.0):
        if not records or records[0].get("kind") != "meta":
            raise ConfigError("replay log must start with a meta record")
        meta = records[0]
        super().__init__(stage_from_dict(meta["stage"]), float(meta.get("fps", 30.0)))
        self.source_kind = "replay"
        self.records = records[1:]
        self.speed = speed

    def run(self, stop: threading.Event) -> None:
        self._wait_for_first_client(stop)
        frame_dt = 1.0 / (self.fps * self.speed)
        last_frame = None
        for record in self.records:
            if stop.is_set():
                return
            frame = record.get("frame")
            if last_frame is not None and frame is not None and frame != last_frame:
                self._sleep_frame(stop, frame_dt * (frame - last_frame))
            if frame is not None:
                last_frame = frame
            with self.lock:
                self.emit_record(record)
        self.emit_record(rec_diag(self._frame, "replay complete", event="replay_complete"))

    def _cmd_force_scene(self, cmd: dict) -> dict:
        scene_id = cmd["scene_id"]
        if scene_id != END and scene_id not in {s.id for s in self.stage.scenes}:
            raise UnknownScene(f"unknown scene {scene_id!r}")
        record = {
            "kind": "scene",
            "frame": self._frame,
            "from": self._current_scene,
            "to": scene_id,
            "forced": True,
        }
        self.emit_record(record)
        return {"ok": True, "message": f"forced scene {scene_id}"}


class SimulationSource(_SourceBase):
    """Runs the simulator plus full pipeline live; the operator can steer it."""

    def __init__(
        self,
        stage: StageConfig,
        script: MotionScript,
        noise: NoiseModel,
        seed: int = 42,
        fps: float = 30.0,
        speed: float = 1.0,
        solve_opts: SolveOptions = SolveOptions(),
        filter_params: FilterParams = FilterParams(),
    ):
        super().__init__(stage, fps)
        self.source_kind = "simulation"
        self.world = SimWorld(stage, script, noise, seed, fps)
        self.pipeline = TrackingPipeline(stage, solve_opts, filter_params, fps)
        self.speed = speed

    def run(self, stop: threading.Event) -> None:
        self._wait_for_first_client(stop)
        frame = 0
        frame_dt = 1.0 / (self.fps * self.speed)
        while not stop.is_set():
            with self.lock:
                out = self.world.tick(frame)
                for record in self.pipeline.process_frame(frame, out.measurements, out.imu):
                    self.emit_record(record)
            frame += 1
            self._sleep_frame(stop, frame_dt)

    def _cmd_move_tag(self, cmd: dict) -> dict:
        tag = int(cmd["tag_id"])
        self.world.drag_tag(tag, float(cmd["x_m"]), float(cmd["y_m"]))
        return {"ok": True, "message": f"tag {tag} moving to requested point"}

    def _cmd_force_scene(self, cmd: dict) -> dict:
        scene_id = cmd["scene_id"]
        state = force_scene(self.pipeline.show_state, self.stage.scenes, scene_id, self._frame + 1)
        self.pipeline.show_state = state
        transition = state.history[-1]
        self.emit_record(
            {
                "kind": "scene",
                "frame": transition.frame,
                "from": transition.from_scene,
                "to": transition.to_scene,
                "forced": True,
            }
        )
        return {"ok": True, "message": f"forced scene {scene_id}"}

    def _cmd_update_zone(self, cmd: dict) -> dict:
        zone = zone_from_dict(cmd["zone"])
        self.pipeline.update_zone(zone)
        return {"ok": True, "message": f"zone {zone.id} updated"}


class CaptureSource(_SourceBase):
    """Decodes a binary capture of wire frames and runs the pipeline on it."""

    def __init__(
        self,
        capture_path,
        stage: StageConfig,
        fps: float = 30.0,
        speed: float = 1.0,
        solve_opts: SolveOptions = SolveOptions(),
        filter_params: FilterParams = FilterParams(),
        chunk_size: int = 4096,
    ):
        super().__init__(stage, fps)
        self.source_kind = "capture"
        self.capture_path = capture_path
        self.speed = speed
        self.chunk_size = chunk_size
        self.pipeline = TrackingPipeline(stage, solve_opts, filter_params, fps)
        self._pending_ranges: dict[int, tuple[int, list[RangeMeasurement]]] = {}
        self._latest_imu: dict[int, ImuSample] = {}

    def _frame_for(self, timestamp_ms: int) -> int:
        return round(timestamp_ms * self.fps / 1000.0)

    def _flush_ranges(self, tag: int) -> None:
        if tag not in self._pending_ranges:
            return
        timestamp_ms, measurements = self._pending_ranges.pop(tag)
        frame = self._frame_for(timestamp_ms)
        for record in self.pipeline.process_frame(frame, measurements, dict(self._latest_imu)):
            self.emit_record(record)

    def _handle_frame(self, frame: wire.Frame) -> None:
        if isinstance(frame, wire.PositionReport):
            err_m = max(frame.err_mm / 1000.0, 0.01)
            fix = PositionFix(
                position=Vec3(frame.x_mm / 1000.0, frame.y_mm / 1000.0, frame.z_mm / 1000.0),
                covariance=np.eye(3) * err_m * err_m,
                residual_rms=0.0,
                n_anchors=3,
                timestamp_ms=frame.timestamp_ms,
                mode="planar",
            )
            for record in self.pipeline.process_position(
                self._frame_for(frame.timestamp_ms), frame.tag_id, fix, self._latest_imu.get(frame.tag_id)
            ):
                self.emit_record(record)
        elif isinstance(frame, wire.RangeReport):
            pending = self._pending_ranges.get(frame.tag_id)
            if pending is not None and pending[0] != frame.timestamp_ms:
                self._flush_ranges(frame.tag_id)
                pending = None
            sigma = 0.25 if frame.quality >= 128 else 0.6
            measurement = RangeMeasurement(
                tag_id=frame.tag_id,
                anchor_id=frame.anchor_id,
                distance=frame.range_mm / 1000.0,
                sigma=sigma,
                quality=frame.quality,
                timestamp_ms=frame.timestamp_ms,
            )
            if pending is None:
                self._pending_ranges[frame.tag_id] = (frame.timestamp_ms, [measurement])
            else:
                pending[1].append(measurement)
        elif isinstance(frame, wire.ImuReport):
            g = 9.81 / 1000.0
            self._latest_imu[frame.tag_id] = ImuSample(
                accel=Vec3(*(v * g for v in frame.accel_mg)),
                gyro=Vec3(*(v * 0.01 * 3.141592653589793 / 180.0 for v in frame.gyro_cdps)),
                mag=Vec3(*(v * 0.1 for v in frame.mag_dut)),
                timestamp_ms=frame.timestamp_ms,
            )
        elif isinstance(frame, wire.Status):
            self.emit_record(
                rec_diag(
                    self._frame_for(frame.timestamp_ms),
                    f"tag {frame.tag_id} status: battery {frame.battery_pct}%",
                    tag=frame.tag_id,
                    battery_pct=frame.battery_pct,
                    flags=frame.flags,
                )
            )

    def run(self, stop: threading.Event) -> None:
        self._wait_for_first_client(stop)
        diag = wire.DecodeDiagnostics()
        buffer = b""
        with open(self.capture_path, "rb") as fh:
            while not stop.is_set():
                chunk = fh.read(self.chunk_size)
                if not chunk:
                    break
                buffer += chunk
                frames, consumed, new_diag = wire.decode_stream(buffer, diag)
                buffer = buffer[consumed:]
                if new_diag.crc_failures > diag.crc_failures or new_diag.resyncs > diag.resyncs:
                    self.emit_record(
                        rec_diag(
                            self._frame,
                            "capture stream corruption",
                            crc_failures=new_diag.crc_failures,
                            resyncs=new_diag.resyncs,
                            bytes_skipped=new_diag.bytes_skipped,
                        )
                    )
                diag = new_diag
                with self.lock:
                    for frame in frames:
                        self._handle_frame(frame)
                self._sleep_frame(stop, 1.0 / (self.fps * self.speed))
        with self.lock:
            for tag in list(self._pending_ranges):
                self._flush_ranges(tag)
        self.emit_record(
            rec_diag(
                self._frame,
                "capture complete",
                event="capture_complete",
                frames_ok=diag.frames_ok,
                crc_failures=diag.crc_failures,
            )
        )


class _Client:
    def __init__(self, server: "TelemetryServer", conn: socket.socket, ws: bool):
        self.server = server
        self.conn = conn
        self.ws = ws
        self.queue: "queue.Queue[str | None]" = queue.Queue(maxsize=_CLIENT_QUEUE_LIMIT)
        self.alive = True

    def enqueue(self, line: str) -> bool:
        try:
            self.queue.put_nowait(line)
            return True
        except queue.Full:
            return False

    def close(self) -> None:
        self.alive = False
        try:
            self.queue.put_nowait(None)
        except queue.Full:
            pass
        try:
            self.conn.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.conn.close()
        except OSError:
            pass


def _ws_accept_key(key: str) -> str:
    digest = hashlib.sha1((key + _WS_GUID).encode()).digest()
    return base64.b64encode(digest).decode()


def _ws_encode_text(payload: bytes) -> bytes:
    length = len(payload)
    if length < 126:
        header = struct.pack("!BB", 0x81, length)
    elif length < 65536:
        header = struct.pack("!BBH", 0x81, 126, length)
    else:
        header = struct.pack("!BBQ", 0x81, 127, length)
    return header + payload


class TelemetryServer:
    """Socket fan-out around one telemetry source."""

    def __init__(
        self,
        source: _SourceBase,
        host: str = "127.0.0.1",
        port: int = 0,
        ws_port: int | None = None,
    ):
        self.source = source
        source.server = self
        self.host = host
        self.client_connected = threading.Event()
        self._stop = threading.Event()
        self._clients: list[_Client] = []
        self._clients_lock = threading.Lock()
        self._threads: list[threading.Thread] = []
        self._listener = self._bind(port)
        self.port = self._listener.getsockname()[1]
        self._ws_listener = None
        self.ws_port = None
        if ws_port is not None:
            self._ws_listener = self._bind(ws_port)
            self.ws_port = self._ws_listener.getsockname()[1]

    def _bind(self, port: int) -> socket.socket:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.host, port))
        sock.listen(16)
        return sock

    # -- lifecycle --------------------------------------------------------
    def start(self) -> None:
        self._spawn(self._accept_loop, self._listener, False)
        if self._ws_listener is not None:
            self._spawn(self._accept_loop, self._ws_listener, True)
        self._spawn(self._run_source)

    def run_forever(self) -> None:
        self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        self._stop.set()
        for listener in (self._listener, self._ws_listener):
            if listener is not None:
                try:
                    listener.close()
                except OSError:
                    pass
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            client.close()
        for thread in self._threads:
            thread.join(timeout=2.0)

    def _spawn(self, fn, *args) -> None:
        thread = threading.Thread(target=fn, args=args, daemon=True)
        thread.start()
        self._threads.append(thread)

    def _run_source(self) -> None:
        try:
            self.source.run(self._stop)
        except Exception as e:  # surfaced to clients, never silent
            self.broadcast(
                record_to_message(rec_diag(-1, f"source failed: {type(e).__name__}: {e}", error="SourceFailure"))
            )

    # -- fan-out ----------------------------------------------------------
    def broadcast(self, message: dict | None) -> None:
        if message is None:
            return
        line = json.dumps(message, separators=(",", ":"))
        dead = []
        with self._clients_lock:
            clients = list(self._clients)
        for client in clients:
            if client.alive and not client.enqueue(line):
                dead.append(client)
        for client in dead:
            self._drop(client, "slow consumer: buffer overflow")

    def _drop(self, client: _Client, reason: str) -> None:
        with self._clients_lock:
            if client in self._clients:
                self._clients.remove(client)
        client.close()

    # -- per-connection plumbing -------------------------------------------
    def _accept_loop(self, listener: socket.socket, ws: bool) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = listener.accept()
            except OSError:
                return
            client = _Client(self, conn, ws)
            threading.Thread(target=self._serve_client, args=(client,), daemon=True).start()

    def _serve_client(self, client: _Client) -> None:
        try:
            if client.ws and not self._ws_handshake(client):
                client.close()
                return
        except OSError:
            client.close()
            return
        # Snapshot goes onto the queue before the client joins the broadcast
        # set, so the first messages it reads always rebuild current state.
        for message in self.source.snapshot():
            client.enqueue(json.dumps(message, separators=(",", ":")))
        with self._clients_lock:
            self._clients.append(client)
        self.client_connected.set()
        writer = threading.Thread(target=self._writer_loop, args=(client,), daemon=True)
        writer.start()
        try:
            if client.ws:
                self._ws_reader_loop(client)
            else:
                self._line_reader_loop(client)
        finally:
            self._drop(client, "disconnected")

    def _writer_loop(self, client: _Client) -> None:
        while client.alive:
            line = client.queue.get()
            if line is None:
                return
            data = (line + "\n").encode()
            if client.ws:
                data = _ws_encode_text(line.encode())
            try:
                client.conn.sendall(data)
            except OSError:
                self._drop(client, "write failed")
                return

    def _handle_command_line(self, client: _Client, raw: str) -> None:
        try:
            cmd = json.loads(raw)
            if not isinstance(cmd, dict):
                raise ValueError("command must be a JSON object")
        except (json.JSONDecodeError, ValueError) as e:
            ack = {"ok": False, "message": f"malformed command: {e}"}
            cmd = {}
        else:
            result = self.source.handle_command(cmd)
            ack = {k: v for k, v in result.items() if k != "reply"}
            reply = result.get("reply")
            if reply is not None:
                client.enqueue(json.dumps(reply, separators=(",", ":")))
        ack_message = {
            "kind": "diag",
            "frame": -1,
            "wallclock_ms": int(time.time() * 1000),
            "payload": {"ack": cmd.get("kind"), "id": cmd.get("id"), **ack},
        }
        client.enqueue(json.dumps(ack_message, separators=(",", ":")))

    def _line_reader_loop(self, client: _Client) -> None:
        buffer = b""
        while client.alive:
            try:
                chunk = client.conn.recv(4096)
            except OSError:
                return
            if not chunk:
                return
            buffer += chunk
            while b"\n" in buffer:
                line, buffer = buffer.split(b"\n", 1)
                text = line.decode("utf-8", errors="replace").strip()
                if text:
                    self._handle_command_line(client, text)

    # -- websocket details --------------------------------------------------
    def _ws_handshake(self, client: _Client) -> bool:
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = client.conn.recv(4096)
            if not chunk:
                return False
            data += chunk
            if len(data) > 65536:
                return False
        headers = {}
        for line in data.split(b"\r\n")[1:]:
            if b":" in line:
                name, value = line.split(b":", 1)
                headers[name.strip().lower().decode()] = value.strip().decode()
        key = headers.get("sec-websocket-key")
        if not key:
            client.conn.sendall(b"HTTP/1.1 400 Bad Request\r\n\r\n")
            return False
        response = (
            "HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {_ws_accept_key(key)}\r\n\r\n"
        )
        client.conn.sendall(response.encode())
        return True

    def _ws_reader_loop(self, client: _Client) -> None:
        buffer = b""
        while client.alive:
            try:
                chunk = client.conn.recv(4096)
            except OSError:
                return
            if not chunk:
                return
            buffer += chunk
            while True:
                parsed = self._ws_parse_frame(buffer)
                if parsed is None:
                    break
                opcode, payload, consumed = parsed
                buffer = buffer[consumed:]
                if opcode == 0x8:  # close
                    return
                if opcode == 0x9:  # ping -> pong
                    client.conn.sendall(struct.pack("!BB", 0x8A, len(payload)) + payload)
                    continue
                if opcode in (0x1, 0x2):
                    text = payload.decode("utf-8", errors="replace").strip()
                    if text:
                        self._handle_command_line(client, text)

    @staticmethod
    def _ws_parse_frame(buffer: bytes):
        if len(buffer) < 2:
            return None
        opcode = buffer[0] & 0x0F
        masked = buffer[1] & 0x80
        length = buffer[1] & 0x7F
        offset = 2
        if length == 126:
            if len(buffer) < 4:
                return None
            length = struct.unpack_from("!H", buffer, 2)[0]
            offset = 4
        elif length == 127:
            if len(buffer) < 10:
                return None
            length = struct.unpack_from("!Q", buffer, 2)[0]
            offset = 10
        mask = b""
        if masked:
            if len(buffer) < offset + 4:
                return None
            mask = buffer[offset : offset + 4]
            offset += 4
        if len(buffer) < offset + length:
            return None
        payload = buffer[offset : offset + length]
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        return opcode, payload, offset + length
