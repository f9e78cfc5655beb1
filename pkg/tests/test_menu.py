import pytest

from resel.errors import MenuError
from resel.menu import ResolutionMenu, binary_menu, default_menu


def test_default_menu_entries():
    menu = default_menu()
    assert menu.entries == (384, 768, 1024)
    assert (menu.range_min, menu.range_max) == (384, 1024)
    assert menu.entries[0] == 384  # the cheap-pass resolution


def test_binary_menu():
    menu = binary_menu()
    assert menu.entries == (384, 1024)
    assert menu.k == 2
    assert set(menu.entries) <= set(default_menu().entries)


def test_supported_defaults_to_entries():
    assert default_menu().supported == (384, 768, 1024)


def test_explicit_supported_sizes():
    menu = ResolutionMenu((384, 768), 384, 1024, supported_sizes=(384, 512, 768, 1024))
    assert menu.supported == (384, 512, 768, 1024)


def test_class_of():
    menu = default_menu()
    assert menu.class_of(768) == 1
    with pytest.raises(MenuError):
        menu.class_of(512)


def test_round_trip_dict():
    menu = ResolutionMenu((384, 768, 1024), 256, 2048, supported_sizes=(384, 1024, 2048))
    assert ResolutionMenu.from_dict(menu.to_dict()) == menu


@pytest.mark.parametrize(
    "kwargs, rule",
    [
        (dict(entries=(384,), range_min=384, range_max=1024), "at least two"),
        (dict(entries=(768, 384), range_min=384, range_max=1024), "strictly increasing"),
        (dict(entries=(384, 384), range_min=384, range_max=1024), "strictly increasing"),
        (dict(entries=(0, 384), range_min=1, range_max=1024), "positive"),
        (dict(entries=(384, 1024), range_min=512, range_max=1024), "range_min"),
        (dict(entries=(384, 1024), range_min=384, range_max=768), "range_max"),
        (
            dict(entries=(384, 1024), range_min=384, range_max=1024, supported_sizes=(384, 512)),
            "supported_sizes",
        ),
        (
            dict(entries=(384, 1024), range_min=384, range_max=1024, supported_sizes=(1024, 384)),
            "supported_sizes",
        ),
    ],
)
def test_validation_names_violated_rule(kwargs, rule):
    with pytest.raises(MenuError, match=rule):
        ResolutionMenu(**kwargs)


def test_from_dict_requires_entries():
    with pytest.raises(MenuError, match="entries"):
        ResolutionMenu.from_dict({"range_min": 384})
