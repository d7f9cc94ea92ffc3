import torchvision.models as models

vgg = models.vgg16(pretrained=True)
plain = models.vgg16()
