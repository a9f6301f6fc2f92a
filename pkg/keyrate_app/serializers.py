from rest_framework import serializers
from django.utils.translation import gettext_lazy as _

from .exceptions import ParameterError
from .params import DEFAULTS, check_invariants


class ExperimentParamsSerializer(serializers.Serializer):
    """Validates the raw strings of a key=value experiment file."""
    eta_d = serializers.FloatField()
    y0 = serializers.FloatField()
    e_d = serializers.FloatField()
    rep_rate = serializers.FloatField()
    alpha_db_per_km = serializers.FloatField()
    eta_id = serializers.FloatField()
    sigma_id = serializers.FloatField()
    q = serializers.FloatField()
    k_pulses = serializers.FloatField()
    m_c = serializers.FloatField()
    epsilon_sec = serializers.FloatField(default=DEFAULTS['epsilon_sec'])
    delta = serializers.FloatField(default=DEFAULTS['delta'])
    varsigma = serializers.FloatField(default=DEFAULTS['varsigma'])
    f_e = serializers.FloatField(default=DEFAULTS['f_e'])
    mu = serializers.FloatField(default=DEFAULTS['mu'])
    nu = serializers.FloatField(default=DEFAULTS['nu'])
    omega = serializers.FloatField(default=DEFAULTS['omega'])
    tau_conf = serializers.FloatField(default=DEFAULTS['tau_conf'])
    a_cut = serializers.IntegerField(default=DEFAULTS['a_cut'])
    b_cut = serializers.IntegerField(default=DEFAULTS['b_cut'])

    def validate_eta_d(self, value):
        if not 0 < value <= 1:
            raise serializers.ValidationError(_("detector efficiency: require 0 < eta_d <= 1"))
        return value

    def validate_eta_id(self, value):
        if not 0 < value <= 1:
            raise serializers.ValidationError(_("intensity detector: require 0 < eta_id <= 1"))
        return value

    def validate_q(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError(_("monitor tap: require 0 < q < 1"))
        return value

    def validate_e_d(self, value):
        if not 0 <= value < 0.5:
            raise serializers.ValidationError(_("misalignment: require 0 <= e_d < 0.5"))
        return value

    def validate_delta(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError(_("untagged window: require 0 < delta < 1"))
        return value

    def validate_f_e(self, value):
        if value < 1:
            raise serializers.ValidationError(_("error correction: require f_e >= 1"))
        return value

    def validate_tau_conf(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError(_("confidence: require 0 < tau_conf < 1"))
        return value

    def validate(self, data):
        """Cross-field invariants (decoy ordering, weak-output condition, ...)."""
        try:
            check_invariants(data)
        except ParameterError as e:
            raise serializers.ValidationError(str(e))
        return data
