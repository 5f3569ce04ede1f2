import numpy as np
import pytest
import torch

from PyGround.encoders import MediaPayload
from PyGround.errors import (CheckpointError, DimMismatch, EmptyMask,
                             SlotMismatch, UnknownChar)
from PyGround.model import (Adapter, IGNORE_INDEX, MultimodalSequence,
                            count_parameters, load_checkpoint,
                            parameter_checksums, parameter_sets,
                            render_prompt, save_checkpoint, split_prompt)
from PyGround.tokenizer import Tokenizer


def image_output(model, rng):
    return model.encode(MediaPayload.image(rng.random((32, 32, 3))))


def test_tokenizer():
    tokenizer = Tokenizer()
    ids = tokenizer.tokenize('At [0.100,0.200]', bos=True, eos=True)
    assert ids[0] == tokenizer.bos_id and ids[-1] == tokenizer.eos_id
    assert tokenizer.detokenize(ids) == 'at [0.100,0.200]'
    assert tokenizer.can_encode('{0.25,0.75}')
    assert not tokenizer.can_encode('snow☃')
    assert '<pad>' in tokenizer.vocab and tokenizer.eos_id in tokenizer.vocab
    assert 'é' not in tokenizer.vocab and 3.0 not in tokenizer.vocab
    with pytest.raises(UnknownChar):
        tokenizer.tokenize('café')


def test_split_and_render_prompt():
    assert render_prompt('where?') == 'user: where? assistant: '
    assert render_prompt('q', ['audio', 'image']) == \
        '<audio><image> user: q assistant: '
    pieces = split_prompt('<image> user: q')
    assert [p.media for p in pieces] == ['image', None]
    assert pieces[1].text == ' user: q'


def test_assemble_lengths_and_mask(model, rng):
    output = image_output(model, rng)
    prompt = render_prompt('what is it?', ['image'])
    sequence = model.assemble(prompt, [output], 'a red square')
    rows = model.encoder_config.image_tokens
    textLength = len(' user: what is it? assistant: ')
    assert len(sequence) == 1 + rows + textLength + len('a red square') + 1
    assert sequence.media_rows == rows
    assert int(sequence.loss_mask.sum()) == len('a red square') + 1
    assert bool((sequence.ids[1:1 + rows] == IGNORE_INDEX).all())
    assert int(sequence.ids[-1]) == model.tokenizer.eos_id
    assert sequence.embeddings.shape[1] == model.lm_config.dim


def test_prompt_matches_conversation(model, rng):
    output = image_output(model, rng)
    single = model.assemble(render_prompt('what?', ['image']), [output], 'ok')
    turns = [('user', 'what?'), ('assistant', 'ok')]
    conversation = model.assemble_conversation(turns, [output])
    assert torch.equal(single.ids, conversation.ids)
    assert torch.equal(single.loss_mask, conversation.loss_mask)


def test_multi_turn_mask(model):
    turns = [('user', 'a?'), ('assistant', 'bc'), ('user', 'd?'),
             ('assistant', 'e')]
    sequence = model.assemble_conversation(turns, [])
    assert int(sequence.loss_mask.sum()) == len('bc') + 1 + len('e') + 1


def test_slot_mismatch(model, rng):
    output = image_output(model, rng)
    with pytest.raises(SlotMismatch):
        model.assemble(render_prompt('q', ['image', 'image']), [output])
    with pytest.raises(SlotMismatch):
        model.assemble(render_prompt('q', ['video']), [output])
    with pytest.raises(SlotMismatch):
        model.assemble(render_prompt('q'), [output])


def test_adapter_dim_check():
    adapter = Adapter(16, 32, 'linear')
    assert adapter(torch.zeros(3, 16)).shape == (3, 32)
    with pytest.raises(DimMismatch):
        adapter(torch.zeros(3, 8))


def test_empty_mask(model):
    sequence = model.assemble(render_prompt('q'), [])
    with pytest.raises(EmptyMask):
        model.lm_loss(sequence)


def test_uniform_logits_give_log_vocab(model):
    model = model.double()
    with torch.no_grad():
        model.llm.head.weight.zero_()
        model.llm.head.bias.zero_()
    sequence = model.assemble(render_prompt('what is it?'), [],
                              'a blue circle')
    expected = np.log(model.tokenizer.vocab_size)
    assert float(model.lm_loss(sequence)) == pytest.approx(expected, abs=1e-6)


def test_losses_are_finite_and_batched(model):
    first = model.assemble(render_prompt('q'), [], 'yes')
    second = model.assemble(render_prompt('longer question?'), [], 'no')
    losses = model.sequence_losses([first, second])
    assert losses.shape == (2,)
    assert bool(torch.isfinite(losses).all())
    assert float(losses[1]) == pytest.approx(float(model.lm_loss(second)),
                                             abs=1e-5)


def test_generate_is_deterministic(model, rng):
    output = image_output(model, rng)
    prompt = render_prompt('where is the red square?', ['image'])
    first = model.generate(prompt, [output], maxNewTokens=12)
    second = model.generate(prompt, [output], maxNewTokens=12)
    assert first == second
    assert len(first) <= 12
    assert model.tokenizer.can_encode(first)
    assert model.generate(prompt, [output], maxNewTokens=0) == ''
    with pytest.raises(ValueError):
        model.generate(prompt, [output], mode='beam')


def test_parameter_sets_partition(model):
    sets = parameter_sets(model)
    names = [name for params in sets.values() for name in params]
    assert sorted(names) == sorted(n for n, _ in model.named_parameters())
    assert len(names) == len(set(names))
    assert all(not p.requires_grad for p in sets['encoders'].values())
    assert any(n.startswith('branches.video_qformer.')
               for n in sets['adapters'])
    assert all(n.startswith('llm.') for n in sets['llm'])
    total = count_parameters(model)
    frozen = sum(p.numel() for p in sets['encoders'].values())
    assert count_parameters(model, trainableOnly=True) == total - frozen


def test_checkpoint_round_trip(model, rng, tmp_path):
    path = tmp_path / 'model.pt'
    save_checkpoint(model, path, extra={'stage': 2})
    loaded = load_checkpoint(path)
    assert parameter_checksums(loaded) == parameter_checksums(model)
    assert loaded.checkpoint_extra == {'stage': 2}
    output = image_output(model, rng)
    prompt = render_prompt('q', ['image'])
    assert loaded.generate(prompt, [output], 8) == \
        model.generate(prompt, [output], 8)


def test_checkpoint_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / 'missing.pt')
    garbage = tmp_path / 'garbage.pt'
    garbage.write_bytes(b'not a checkpoint')
    with pytest.raises(CheckpointError):
        load_checkpoint(garbage)
    foreign = tmp_path / 'foreign.pt'
    torch.save({'weights': torch.zeros(2)}, str(foreign))
    with pytest.raises(CheckpointError):
        load_checkpoint(foreign)


def test_gradient_matches_finite_difference(model):
    """Autograd gradient of the loss against a central difference."""
    model = model.double()
    sequence = model.assemble(render_prompt('abc?'), [], 'de')
    weight = model.llm.head.weight
    loss = model.lm_loss(sequence)
    gradient, = torch.autograd.grad(loss, weight)

    step = 1e-6
    generator = np.random.default_rng(0)
    for _ in range(5):
        row = int(generator.integers(weight.shape[0]))
        col = int(generator.integers(weight.shape[1]))
        with torch.no_grad():
            original = float(weight[row, col])
            weight[row, col] = original + step
            sequence = model.assemble(render_prompt('abc?'), [], 'de')
            plus = float(model.lm_loss(sequence))
            weight[row, col] = original - step
            sequence = model.assemble(render_prompt('abc?'), [], 'de')
            minus = float(model.lm_loss(sequence))
            weight[row, col] = original
        estimate = (plus - minus) / (2 * step)
        assert estimate == pytest.approx(float(gradient[row, col]),
                                         rel=1e-4, abs=1e-7)


def test_tokenizer_is_bijective_on_charset():
    tokenizer = Tokenizer()
    rng = np.random.default_rng(3)
    charset = list(tokenizer.charset)
    for _ in range(1000):
        length = int(rng.integers(1, 40))
        text = ''.join(charset[int(i)]
                       for i in rng.integers(len(charset), size=length))
        assert tokenizer.detokenize(tokenizer.tokenize(text)) == text


def test_logits_are_causal(model):
    model.eval()
    sequence = model.assemble(render_prompt('where is it?'), [], 'here')
    embeddings = sequence.embeddings.detach().unsqueeze(0)
    with torch.no_grad():
        base = model.llm(embeddings)
        positions = np.random.default_rng(1).choice(len(sequence), 5,
                                                    replace=False)
        for position in (int(p) for p in positions):
            perturbed = embeddings.clone()
            perturbed[0, position] += 1.0
            logits = model.llm(perturbed)
            change = (logits - base).abs().amax(dim=-1)[0]
            if position > 0:
                assert float(change[:position].max()) < 1e-5
            assert float(change[position]) > 1e-5


def test_masked_targets_do_not_count(model, rng):
    output = image_output(model, rng)
    sequence = model.assemble(render_prompt('what?', ['image']), [output],
                              'ok')
    loss = float(model.lm_loss(sequence))
    masked = [i for i in range(1, len(sequence))
              if float(sequence.loss_mask[i]) == 0 and
              int(sequence.ids[i]) != IGNORE_INDEX]
    assert masked
    for position in masked:
        ids = sequence.ids.clone()
        ids[position] = model.tokenizer.eos_id
        changed = MultimodalSequence(sequence.embeddings, ids,
                                     sequence.loss_mask, sequence.media_rows)
        assert float(model.lm_loss(changed)) == loss
