"""Tests for core data types."""

from netsym.core.types import (
    ActionSide,
    Activation,
    Encoder,
    FieldType,
    GroupName,
    LayerKind,
    LossKind,
    PriorKind,
    Slot,
)


class TestSlot:
    def test_creation(self):
        s = Slot(2, True)
        assert s.point == 2
        assert s.conjugate is True

    def test_default_not_conjugated(self):
        assert Slot(0).conjugate is False

    def test_tuple_unpacking(self):
        point, conjugate = Slot(1, False)
        assert (point, conjugate) == (1, False)

    def test_equality(self):
        assert Slot(1) == Slot(1, False)
        assert Slot(1) != Slot(1, True)


class TestEnums:
    def test_prior_kind_values(self):
        assert PriorKind.GAUSSIAN.value == "gaussian"
        assert PriorKind.UNIFORM_CIRCLE.value == "uniform-circle"
        assert PriorKind.QUARTIC.value == "quartic"

    def test_layer_kind_from_string(self):
        assert LayerKind("t-layer") is LayerKind.T_LAYER
        assert LayerKind("linear") is LayerKind.LINEAR

    def test_activation_from_string(self):
        assert Activation("exp-normalized") is Activation.EXP_NORMALIZED
        assert Activation("relu") is Activation.RELU

    def test_group_names(self):
        assert GroupName("SO") is GroupName.SO
        assert GroupName("SU") is GroupName.SU
        assert GroupName("translation") is GroupName.TRANSLATION

    def test_sides_and_fields(self):
        assert ActionSide("input") is ActionSide.INPUT
        assert FieldType("complex") is FieldType.COMPLEX

    def test_training_enums(self):
        assert LossKind("so-invariant") is LossKind.SO_INVARIANT
        assert Encoder("one-cold") is Encoder.ONE_COLD
