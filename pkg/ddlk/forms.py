import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from django import forms
from django.conf import settings

from .benchmarks import KINDS, KNOCKOFF_SOURCES, P_GRID, BenchmarkSpec, MethodConfig
from .exceptions import InvalidInput
from .knockoff_filter import RESPONSE_MODELS, STATISTICS, knockoff_threshold
from .trainer import TrainConfig


def _scalar_list(value, cast, label):
    if value in (None, '', []):
        return None
    if isinstance(value, str):
        value = [part for part in value.split(',') if part.strip()]
    elif not isinstance(value, (list, tuple)):
        value = [value]
    try:
        return [cast(item) for item in value]
    except (TypeError, ValueError):
        raise forms.ValidationError(f'Enter a list of {label}.', code='invalid')


class FloatListField(forms.Field):
    """A JSON list (or comma-separated string) of numbers"""

    def to_python(self, value):
        values = _scalar_list(value, float, 'numbers')
        if values is not None and not all(math.isfinite(v) for v in values):
            raise forms.ValidationError('Numbers must be finite.', code='invalid')
        return values


class IntegerListField(forms.Field):
    def to_python(self, value):
        values = _scalar_list(value, float, 'integers')
        if values is not None and any(v != int(v) for v in values):
            raise forms.ValidationError('Enter a list of integers.', code='invalid')
        return None if values is None else [int(v) for v in values]


class StringListField(forms.Field):
    def to_python(self, value):
        return _scalar_list(value, str, 'names')


class PositiveFloatField(forms.FloatField):
    def validate(self, value):
        super().validate(value)
        if value is not None and value <= 0:
            raise forms.ValidationError('Ensure this value is greater than 0.', code='min_value')


def _rename_lambda(data):
    """'lambda' is the public key; the forms and dataclasses call it lam"""
    if data is None:
        return None
    data = dict(data)
    if 'lambda' in data:
        data['lam'] = data.pop('lambda')
    return data


def _raise_invalid(form, name):
    errors = '; '.join(
        f'{field}: {" ".join(str(message) for message in messages)}' for field, messages in form.errors.items()
    )
    raise InvalidInput(f'invalid {name}: {errors}')


class TrainConfigForm(forms.Form):
    """Stage-1 and stage-2 training options; missing keys keep their defaults"""
    lam = forms.FloatField(required=False, min_value=0)
    lr_phi = PositiveFloatField(required=False)
    lr_beta = PositiveFloatField(required=False)
    lr_joint = PositiveFloatField(required=False)
    max_epochs_joint = forms.IntegerField(required=False, min_value=1)
    max_epochs_knockoff = forms.IntegerField(required=False, min_value=1)
    batch_size = forms.IntegerField(required=False, min_value=1)
    patience = forms.IntegerField(required=False, min_value=1)
    temperature = PositiveFloatField(required=False)
    seed = forms.IntegerField(required=False, min_value=0)
    n_components = forms.IntegerField(required=False, min_value=1)
    hidden_units = forms.IntegerField(required=False, min_value=1)
    min_delta = forms.FloatField(required=False, min_value=0)
    val_fraction = forms.FloatField(required=False, min_value=0, max_value=1)
    validation_swaps = forms.IntegerField(required=False, min_value=0)

    def __init__(self, data=None, *args, **kwargs):
        super().__init__(_rename_lambda(data), *args, **kwargs)

    def clean_val_fraction(self):
        value = self.cleaned_data.get('val_fraction')
        if value is not None and not 0 < value < 1:
            raise forms.ValidationError('Validation fraction must lie strictly between 0 and 1.')
        return value

    def to_config(self):
        if not self.is_valid():
            _raise_invalid(self, 'training config')
        return TrainConfig.from_dict(self.cleaned_data)


class BenchmarkSpecForm(forms.Form):
    kind = forms.ChoiceField(choices=[(k, k) for k in KINDS])
    n_samples = forms.IntegerField(required=False, min_value=10)
    d = forms.IntegerField(required=False, min_value=1)
    m = forms.IntegerField(required=False, min_value=0)
    rho = FloatListField(required=False)
    mixture_centers = FloatListField(required=False)
    mixture_weights = FloatListField(required=False)
    lam = forms.FloatField(required=False, min_value=0)
    split = FloatListField(required=False)
    seeds = IntegerListField(required=False)
    noise = forms.FloatField(required=False, min_value=0)

    def __init__(self, data=None, *args, **kwargs):
        super().__init__(_rename_lambda(data), *args, **kwargs)

    def clean(self):
        cleaned_data = super().clean()
        values = {key: value for key, value in cleaned_data.items() if value is not None}
        if 'kind' in values:
            try:
                self.spec = BenchmarkSpec(**values)
            except InvalidInput as exc:
                raise forms.ValidationError(str(exc))
        return cleaned_data

    def to_spec(self):
        if not self.is_valid():
            _raise_invalid(self, 'benchmark spec')
        return self.spec


class RunConfigForm(forms.Form):
    """Top level of a --config file"""
    train = forms.JSONField(required=False)
    benchmark = forms.JSONField(required=False)
    statistic = forms.ChoiceField(required=False, choices=[(s, s) for s in STATISTICS])
    response_model = forms.ChoiceField(required=False, choices=[(r, r) for r in RESPONSE_MODELS])
    knockoffs = forms.ChoiceField(required=False, choices=[(k, k) for k in KNOCKOFF_SOURCES])
    levels = FloatListField(required=False)
    response = forms.CharField(required=False)
    data = forms.CharField(required=False)
    val = forms.CharField(required=False)
    out = forms.CharField(required=False)
    seed = forms.IntegerField(required=False, min_value=0)
    bins = forms.IntegerField(required=False, min_value=1)

    def clean_levels(self):
        levels = self.cleaned_data.get('levels')
        if levels is not None and (not levels or any(not 0 < p < 1 for p in levels)):
            raise forms.ValidationError('Nominal levels must lie strictly between 0 and 1.')
        return levels

    def clean_train(self):
        value = self.cleaned_data.get('train')
        if value is not None and not isinstance(value, dict):
            raise forms.ValidationError('train must be an object.')
        return value

    def clean_benchmark(self):
        value = self.cleaned_data.get('benchmark')
        if value is not None and not isinstance(value, dict):
            raise forms.ValidationError('benchmark must be an object.')
        return value


@dataclass
class RunConfig:
    train: TrainConfig
    method: MethodConfig
    benchmark: Optional[BenchmarkSpec]
    response: Optional[str]
    data: Optional[str]
    val: Optional[str]
    out: Path
    bins: int


def read_config_file(path):
    if path is None:
        return {}
    try:
        with open(path, encoding='utf-8') as handle:
            payload = json.load(handle)
    except FileNotFoundError:
        raise InvalidInput(f'no such config file: {path}')
    except json.JSONDecodeError as exc:
        raise InvalidInput(f'config file {path} is not valid JSON: {exc}')
    if not isinstance(payload, dict):
        raise InvalidInput(f'config file {path} must hold a JSON object')
    return payload


def load_run_config(path=None, overrides=None):
    """
    Validate a config file and command-line overrides (seed, lam, statistic,
    out, data, ...) into a RunConfig before any work starts. Overrides win.
    """
    payload = read_config_file(path)
    overrides = {key: value for key, value in (overrides or {}).items() if value is not None}
    form = RunConfigForm(data={key: value for key, value in payload.items()})
    if not form.is_valid():
        _raise_invalid(form, 'config')
    cleaned = form.cleaned_data

    train_values = dict(cleaned.get('train') or {})
    if 'seed' in overrides:
        train_values['seed'] = overrides['seed']
    elif cleaned.get('seed') is not None:
        train_values.setdefault('seed', cleaned['seed'])
    else:
        train_values.setdefault('seed', settings.KNOCKOFF_FORGE_DEFAULT_SEED)
    if 'lam' in overrides:
        train_values.pop('lambda', None)
        train_values['lam'] = overrides['lam']
    train = TrainConfigForm(train_values).to_config()

    benchmark = None
    if cleaned.get('benchmark') is not None:
        benchmark_values = dict(cleaned['benchmark'])
        if 'lam' in overrides:
            benchmark_values.pop('lambda', None)
            benchmark_values['lam'] = overrides['lam']
        benchmark = BenchmarkSpecForm(benchmark_values).to_spec()

    method = MethodConfig(
        train=train,
        statistic=overrides.get('statistic') or cleaned.get('statistic') or 'hrt',
        response_model=cleaned.get('response_model') or 'network',
        knockoffs=cleaned.get('knockoffs') or 'ddlk',
        levels=tuple(overrides.get('levels') or cleaned.get('levels') or P_GRID),
    )
    return RunConfig(
        train=train,
        method=method,
        benchmark=benchmark,
        response=overrides.get('response') or cleaned.get('response') or None,
        data=overrides.get('data') or cleaned.get('data') or None,
        val=overrides.get('val') or cleaned.get('val') or None,
        out=Path(overrides.get('out') or cleaned.get('out') or '.'),
        bins=cleaned.get('bins') or 50,
    )


class SelectionReportForm(forms.Form):
    """Schema and self-consistency of a selection report"""
    statistic = forms.ChoiceField(choices=[(s, s) for s in STATISTICS])
    response = forms.CharField()
    columns = StringListField()
    w = FloatListField()
    selections = forms.JSONField()
    null_sign_balance = forms.JSONField()

    def clean_selections(self):
        selections = self.cleaned_data.get('selections')
        if not isinstance(selections, list) or not selections:
            raise forms.ValidationError('selections must be a non-empty list.')
        for entry in selections:
            if not isinstance(entry, dict) or not {'level', 'threshold', 'selected'} <= set(entry):
                raise forms.ValidationError('each selection needs level, threshold and selected.')
        return selections

    def clean_null_sign_balance(self):
        balance = self.cleaned_data.get('null_sign_balance')
        if not isinstance(balance, dict) or not {'n_nonzero', 'n_positive', 'fraction_positive', 'p_value'} <= set(balance):
            raise forms.ValidationError('null_sign_balance is incomplete.')
        return balance

    def clean(self):
        cleaned_data = super().clean()
        columns, w, selections = (cleaned_data.get(key) for key in ('columns', 'w', 'selections'))
        if columns is None or w is None or selections is None:
            return cleaned_data
        if len(columns) != len(w):
            raise forms.ValidationError('columns and w have different lengths.')
        for entry in selections:
            expected = knockoff_threshold(w, float(entry['level']))
            threshold = math.inf if entry['threshold'] is None else float(entry['threshold'])
            if threshold != expected.threshold:
                raise forms.ValidationError(f'threshold at level {entry["level"]} does not match the statistics.')
            if list(entry['selected']) != [columns[j] for j in expected.selected]:
                raise forms.ValidationError(f'selected features at level {entry["level"]} do not match the threshold.')
        return cleaned_data
