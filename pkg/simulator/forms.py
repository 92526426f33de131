import math
from decimal import Decimal, InvalidOperation

from django import forms

TOPOLOGIES = ("single_ring", "hird", "mesh_chipper", "mesh_minbd")
PATTERNS = ("uniform_random", "bit_complement", "transpose", "adversarial_starve", "trace")
ON_OFF = (("on", "on"), ("off", "off"))
HIRD_SIZES = (16, 64)


def _on_off(**kwargs):
    return forms.TypedChoiceField(choices=ON_OFF, coerce=lambda value: value == "on", **kwargs)


class ExperimentForm(forms.Form):
    topology = forms.ChoiceField(choices=[(t, t) for t in TOPOLOGIES])
    nodes = forms.IntegerField(min_value=2, max_value=4096)
    lanes = forms.IntegerField(min_value=1, max_value=8)
    lane_ratio = forms.IntegerField(min_value=1, max_value=4)
    bridges = forms.TypedChoiceField(choices=[(str(b), str(b)) for b in (4, 8, 16)], coerce=int)
    fifo_up = forms.IntegerField(min_value=1, max_value=64)
    fifo_down = forms.IntegerField(min_value=1, max_value=64)
    side_buffer = forms.IntegerField(min_value=1, max_value=64)
    hop_latency = forms.IntegerField(min_value=1, max_value=3)
    global_hop_latency = forms.IntegerField(min_value=1, max_value=3)
    strict_chipper = _on_off()
    golden_epoch = forms.IntegerField(min_value=0, max_value=10_000_000)
    c_threshold = forms.IntegerField(min_value=0, max_value=1000)
    reassembly_slots = forms.IntegerField(min_value=1, max_value=1024)
    retransmit_in_band = _on_off()

    injection_guarantee = _on_off()
    transfer_guarantee = _on_off()
    injection_threshold = forms.IntegerField(min_value=1, max_value=1_000_000)
    retry_threshold = forms.IntegerField(min_value=1, max_value=64)
    throttle_latency = forms.IntegerField(min_value=1, max_value=1000)

    pattern = forms.ChoiceField(choices=[(p, p) for p in PATTERNS])
    rate = forms.FloatField(min_value=0.0, max_value=1.0)
    rate_sweep = forms.CharField(required=False, strip=True)
    trace_path = forms.CharField(required=False, strip=True)
    packet_flits = forms.IntegerField(min_value=1, max_value=64)

    cycles = forms.IntegerField(min_value=1, max_value=100_000_000)
    warmup = forms.CharField()
    seed = forms.IntegerField(min_value=0, max_value=(1 << 64) - 1)
    sat_threshold = forms.IntegerField(min_value=1)
    throughput_window = forms.IntegerField(min_value=0)
    check_conservation = _on_off()

    def clean_warmup(self):
        value = self.cleaned_data["warmup"].strip().lower()
        if value == "auto":
            return None
        try:
            warmup = int(value, 10)
        except ValueError:
            raise forms.ValidationError("Use a cycle count or 'auto'.") from None
        if warmup < 0:
            raise forms.ValidationError("Warmup cannot be negative.")
        return warmup

    def clean_rate_sweep(self):
        value = self.cleaned_data["rate_sweep"]
        if value:
            parse_rate_sweep(value)
        return value

    def clean(self):
        cleaned = super().clean()
        topology = cleaned.get("topology")
        nodes = cleaned.get("nodes")
        pattern = cleaned.get("pattern")
        if topology is None or nodes is None:
            return cleaned
        if topology == "hird" and nodes not in HIRD_SIZES:
            self.add_error("nodes", f"hird supports {', '.join(map(str, HIRD_SIZES))} nodes.")
        if topology.startswith("mesh_") and math.isqrt(nodes) ** 2 != nodes:
            self.add_error("nodes", "A mesh needs a square node count.")
        if pattern == "trace" and not cleaned.get("trace_path"):
            self.add_error("trace_path", "The trace pattern needs trace_path.")
        if pattern == "adversarial_starve" and (topology != "hird" or nodes != 16):
            self.add_error("pattern", "adversarial_starve runs on the 16-node hird network only.")
        if pattern == "bit_complement" and nodes & (nodes - 1):
            self.add_error("pattern", "bit_complement needs a power-of-two node count.")
        if pattern == "transpose" and math.isqrt(nodes) ** 2 != nodes:
            self.add_error("pattern", "transpose needs a square node count.")
        return cleaned


def parse_rate_sweep(value):
    """``start:stop:step`` (inclusive) to a list of rates."""
    parts = value.split(":")
    if len(parts) != 3:
        raise forms.ValidationError("Use start:stop:step.")
    try:
        start, stop, step = (Decimal(part.strip()) for part in parts)
    except InvalidOperation:
        raise forms.ValidationError("Sweep bounds must be numbers.") from None
    if step <= 0 or start > stop or start < 0 or stop > 1:
        raise forms.ValidationError("Need 0 <= start <= stop <= 1 and step > 0.")
    rates = []
    current = start
    while current <= stop:
        rates.append(float(current))
        current += step
    return rates
